/* Copyright 2026 The hbnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "hbnet/modelio.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "hbnet/error.hpp"
#include "json.hpp"

namespace hbnet {

using json = nlohmann::json;

namespace {

// Little-endian byte sink/source.
class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }
  void need(std::uint64_t n) const {
    if (n > b_.size() - pos_) throw FormatError("unexpected end of data");
  }

 private:
  std::uint64_t get(int n) {
    need(n);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(std::span<const std::uint8_t> bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    c = crc32(c, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

enum class Tag : std::uint32_t { kPool = 0, kConv = 1, kHBDS = 2, kBinaryConv = 3 };

void put_floats(Writer& w, std::span<const float> v) {
  w.u64(v.size());
  for (float f : v) w.f32(f);
}

void put_bits(Writer& w, const BitTensor& t) {
  w.u32(t.shape().height);
  w.u32(t.shape().width);
  w.u32(t.shape().channels);
  w.u64(t.shape().channels);
  w.u64(t.words().size());
  for (auto word : t.words()) w.u64(word);
}

void put_bn(Writer& w, const BatchNormParams& bn) {
  put_floats(w, bn.gamma);
  put_floats(w, bn.beta);
  put_floats(w, bn.running_mean);
  put_floats(w, bn.running_var);
  const float eps[1] = {bn.epsilon};
  put_floats(w, eps);
}

std::vector<float> get_floats(Reader& r) {
  const std::uint64_t n = r.u64();
  r.need(n * 4);
  std::vector<float> v(n);
  for (float& f : v) f = r.f32();
  return v;
}

BitTensor get_bits(Reader& r) {
  TensorShape s;
  s.height = static_cast<int>(r.u32());
  s.width = static_cast<int>(r.u32());
  s.channels = static_cast<int>(r.u32());
  const std::uint64_t valid = r.u64();
  const std::uint64_t n = r.u64();
  if (valid != static_cast<std::uint64_t>(s.channels) || !s.valid()) {
    throw ShapeError("weights: bit blob declares an inconsistent shape");
  }
  r.need(n * 8);
  std::vector<BitTensor::Word> words(n);
  for (auto& word : words) word = r.u64();
  try {
    return BitTensor(s, std::move(words));
  } catch (const ContractError& e) {
    throw ShapeError(std::string("weights: ") + e.what());
  }
}

BatchNormParams get_bn(Reader& r) {
  BatchNormParams bn;
  bn.gamma = get_floats(r);
  bn.beta = get_floats(r);
  bn.running_mean = get_floats(r);
  bn.running_var = get_floats(r);
  const std::vector<float> eps = get_floats(r);
  if (eps.size() != 1) throw ShapeError("weights: batchnorm epsilon blob must hold one value");
  bn.epsilon = eps[0];
  return bn;
}

FloatTensor float_tensor(TensorShape s, std::vector<float> v) {
  if (v.size() != s.elements()) throw ShapeError("weights: float blob length does not match spec");
  return FloatTensor(s, std::move(v));
}

std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

int get_int(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) throw FormatError(std::string("'") + key + "' must be an integer");
  return j.at(key).get<int>();
}

}  // namespace

// --- specs -----------------------------------------------------------------

std::string spec_to_json(const NetworkSpec& spec) {
  json j;
  j["input"] = {spec.input.height, spec.input.width, spec.input.channels};
  j["tap"] = spec.tap;
  j["layers"] = json::array();
  for (const LayerDesc& l : spec.layers) {
    json e{{"type", to_string(l.kind)}, {"kernel", l.kernel}, {"stride", l.stride}};
    switch (l.kind) {
      case LayerKind::kStandardConv:
      case LayerKind::kBinaryConv:
        e["padding"] = l.padding;
        e["out_channels"] = l.out_channels;
        break;
      case LayerKind::kHBDS:
        e["out_channels"] = l.out_channels;
        e["depth_multiplier"] = l.depth_multiplier;
        break;
      case LayerKind::kMaxPool:
        break;
    }
    j["layers"].push_back(e);
  }
  return j.dump(2);
}

NetworkSpec spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("network spec: ") + e.what());
  }
  try {
    NetworkSpec spec;
    const auto in = j.at("input");
    if (!in.is_array() || in.size() != 3) throw FormatError("network spec: input must be [h, w, c]");
    spec.input = {in[0].get<int>(), in[1].get<int>(), in[2].get<int>()};
    for (const json& e : j.at("layers")) {
      LayerDesc l;
      l.kind = layer_kind_from_string(e.at("type").get<std::string>());
      l.kernel = get_int(e, "kernel", 1);
      l.stride = get_int(e, "stride", 1);
      l.padding = get_int(e, "padding", 0);
      l.out_channels = get_int(e, "out_channels", 0);
      l.depth_multiplier = get_int(e, "depth_multiplier", 1);
      if (l.kind == LayerKind::kHBDS && l.padding != 0) {
        throw FormatError("network spec: hbds layers take no padding");
      }
      spec.layers.push_back(l);
    }
    spec.tap = get_int(j, "tap", static_cast<int>(spec.layers.size()) - 1);
    (void)spec.layer_shapes();
    return spec;
  } catch (const json::exception& e) {
    throw FormatError(std::string("network spec: ") + e.what());
  }
}

NetworkSpec load_spec_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return spec_from_json(std::string(bytes.begin(), bytes.end()));
}

// --- weights ---------------------------------------------------------------

std::vector<std::uint8_t> save_weights(const Network& net) {
  Writer payload;
  payload.str(spec_to_json(net.spec()));
  payload.u32(static_cast<std::uint32_t>(net.weights().size()));
  for (std::size_t i = 0; i < net.weights().size(); ++i) {
    const LayerWeights& lw = net.weights()[i];
    if (std::holds_alternative<PoolWeights>(lw)) {
      payload.u32(static_cast<std::uint32_t>(Tag::kPool));
      payload.u32(static_cast<std::uint32_t>(i));
      payload.u32(0);
      payload.u32(0);
    } else if (const auto* c = std::get_if<StandardConvWeights>(&lw)) {
      payload.u32(static_cast<std::uint32_t>(Tag::kConv));
      payload.u32(static_cast<std::uint32_t>(i));
      payload.u32(1);
      payload.u32(0);
      put_floats(payload, c->weights.data());
    } else if (const auto* h = std::get_if<HBDSWeights>(&lw)) {
      payload.u32(static_cast<std::uint32_t>(Tag::kHBDS));
      payload.u32(static_cast<std::uint32_t>(i));
      payload.u32(7);
      payload.u32(1);
      put_floats(payload, h->depthwise.data());
      put_floats(payload, h->bias);
      put_bn(payload, h->bn);
      put_bits(payload, h->pointwise);
    } else if (const auto* b = std::get_if<BinaryConvWeights>(&lw)) {
      payload.u32(static_cast<std::uint32_t>(Tag::kBinaryConv));
      payload.u32(static_cast<std::uint32_t>(i));
      payload.u32(5);
      payload.u32(1);
      put_bn(payload, b->bn);
      put_bits(payload, b->filters);
    }
  }
  Writer file;
  file.bytes(kWeightMagic, 4);
  file.u32(kWeightVersion);
  file.u64(payload.data().size());
  file.u32(crc(payload.data()));
  file.u32(0);
  file.bytes(payload.data().data(), payload.data().size());
  return std::move(file.data());
}

Network load_weights(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 24;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kWeightMagic, 4) != 0) {
    throw FormatError("weights: bad magic (expected \"HBDS\")");
  }
  if (bytes.size() < kHeader) throw ChecksumError("weights: truncated header");
  Reader head(bytes.subspan(4, kHeader - 4));
  const std::uint32_t version = head.u32();
  if (version != kWeightVersion) {
    throw VersionError("weights: unsupported format version " + std::to_string(version));
  }
  const std::uint64_t length = head.u64();
  const std::uint32_t expected_crc = head.u32();
  const auto payload = bytes.subspan(kHeader);
  if (payload.size() != length) {
    throw ChecksumError("weights: payload is " + std::to_string(payload.size()) +
                        " bytes, header declares " + std::to_string(length));
  }
  if (crc(payload) != expected_crc) throw ChecksumError("weights: CRC-32 mismatch");

  Reader r(payload);
  const NetworkSpec spec = spec_from_json(r.str());
  const std::vector<TensorShape> shapes = spec.layer_shapes();
  const std::uint32_t count = r.u32();
  if (count != spec.layers.size()) {
    throw ShapeError("weights: " + std::to_string(count) + " records for " +
                     std::to_string(spec.layers.size()) + " layers");
  }
  std::vector<LayerWeights> weights;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto tag = static_cast<Tag>(r.u32());
    const std::uint32_t index = r.u32();
    const std::uint32_t nf = r.u32();
    const std::uint32_t nb = r.u32();
    if (index != i) throw FormatError("weights: records out of order");
    const LayerDesc& l = spec.layers[i];
    const int ci = i == 0 ? spec.input.channels : shapes[i - 1].channels;
    const int k = l.kernel;
    auto expect = [&](LayerKind kind, std::uint32_t floats, std::uint32_t bits) {
      if (l.kind != kind) throw ShapeError("weights: record " + std::to_string(i) + " kind differs from spec");
      if (nf != floats || nb != bits) throw FormatError("weights: unexpected blob count");
    };
    switch (tag) {
      case Tag::kPool:
        expect(LayerKind::kMaxPool, 0, 0);
        weights.emplace_back(PoolWeights{});
        break;
      case Tag::kConv:
        expect(LayerKind::kStandardConv, 1, 0);
        weights.emplace_back(
            StandardConvWeights{float_tensor({k, k, ci * l.out_channels}, get_floats(r))});
        break;
      case Tag::kHBDS: {
        expect(LayerKind::kHBDS, 7, 1);
        HBDSWeights w;
        w.depthwise = float_tensor({k, k, ci * l.depth_multiplier}, get_floats(r));
        w.bias = get_floats(r);
        w.bn = get_bn(r);
        w.pointwise = get_bits(r);
        weights.emplace_back(std::move(w));
        break;
      }
      case Tag::kBinaryConv: {
        expect(LayerKind::kBinaryConv, 5, 1);
        BinaryConvWeights w;
        w.bn = get_bn(r);
        w.filters = get_bits(r);
        weights.emplace_back(std::move(w));
        break;
      }
      default:
        throw FormatError("weights: unknown record tag " +
                          std::to_string(static_cast<std::uint32_t>(tag)));
    }
  }
  if (!r.done()) throw FormatError("weights: trailing bytes after last record");
  try {
    return Network(spec, std::move(weights));
  } catch (const ShapeError&) {
    throw;
  } catch (const ContractError& e) {
    throw ShapeError(std::string("weights: ") + e.what());
  }
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

// --- descriptors -------------------------------------------------------------

std::vector<std::uint8_t> save_descriptors(std::span<const Descriptor> descriptors) {
  const std::uint64_t dim = descriptors.empty() ? 0 : descriptors.front().dim();
  Writer w;
  w.bytes("HBDD", 4);
  w.u32(1);
  w.u64(descriptors.size());
  w.u64(dim);
  for (const Descriptor& d : descriptors) {
    if (d.dim() != dim) throw ContractError("save_descriptors: descriptors differ in dimension");
    w.str(d.id);
    for (float v : d.values) w.f32(v);
  }
  return std::move(w.data());
}

std::vector<Descriptor> load_descriptors(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "HBDD", 4) != 0) {
    throw FormatError("descriptors: bad magic (expected \"HBDD\")");
  }
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != 1) throw VersionError("descriptors: unsupported version " + std::to_string(version));
  const std::uint64_t count = r.u64();
  const std::uint64_t dim = r.u64();
  std::vector<Descriptor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    Descriptor d;
    d.id = r.str();
    r.need(dim * 4);
    d.values.resize(dim);
    for (float& v : d.values) v = r.f32();
    out.push_back(std::move(d));
  }
  if (!r.done()) throw FormatError("descriptors: trailing bytes");
  return out;
}

// --- images and manifests ------------------------------------------------------

FloatTensor preprocess_rgb(std::span<const std::uint8_t> rgb, int height, int width,
                           const Preprocess& pre) {
  if (rgb.size() != static_cast<std::size_t>(height) * width * 3) {
    throw ShapeError("preprocess: buffer does not hold height x width x 3 bytes");
  }
  if ((!pre.mean.empty() && pre.mean.size() != 3) || (!pre.stddev.empty() && pre.stddev.size() != 3)) {
    throw ContractError("preprocess: mean/std must have three entries");
  }
  FloatTensor out({height, width, 3});
  auto dst = out.data();
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const int c = static_cast<int>(i % 3);
    float v = rgb[i] * pre.scale;
    if (!pre.mean.empty()) v -= pre.mean[c];
    if (!pre.stddev.empty()) v /= pre.stddev[c];
    dst[i] = v;
  }
  return out;
}

FloatTensor load_image(const std::filesystem::path& path, const Preprocess& pre) {
  if (!std::filesystem::exists(path)) throw IoError("image not found: '" + path.string() + "'");
  // IMREAD_COLOR replicates single-channel images into three channels.
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot decode image '" + path.string() + "'");
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  if (rgb.rows != pre.height || rgb.cols != pre.width) {
    cv::Mat resized;
    cv::resize(rgb, resized, cv::Size(pre.width, pre.height), 0, 0, cv::INTER_AREA);
    rgb = resized;
  }
  if (!rgb.isContinuous()) rgb = rgb.clone();
  return preprocess_rgb(std::span<const std::uint8_t>(rgb.data, rgb.total() * 3), pre.height,
                        pre.width, pre);
}

GroundTruth DatasetManifest::ground_truth() const {
  const int nq = static_cast<int>(queries.size());
  const int nr = static_cast<int>(references.size());
  if (truth_mode == TruthMode::kTolerance) {
    return GroundTruth::from_tolerance(nq, nr, tolerance, alignment);
  }
  if (pairs.size() != queries.size()) {
    throw ContractError("manifest: pairs ground truth needs one entry per query");
  }
  std::vector<std::set<int>> correct;
  for (const auto& p : pairs) correct.emplace_back(p.begin(), p.end());
  return GroundTruth(std::move(correct), nr);
}

DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  try {
    DatasetManifest m;
    m.name = j.value("name", std::string("dataset"));
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_absolute() ? path : base_dir / path;
    };
    for (const auto& p : j.at("references")) m.references.push_back(resolve(p.get<std::string>()));
    for (const auto& p : j.at("queries")) m.queries.push_back(resolve(p.get<std::string>()));
    const json& gt = j.at("ground_truth");
    const std::string mode = gt.at("mode").get<std::string>();
    if (mode == "tolerance") {
      m.truth_mode = TruthMode::kTolerance;
      m.tolerance = gt.at("frames").get<int>();
      if (m.tolerance < 0) throw FormatError("manifest: tolerance must be >= 0");
      if (gt.contains("alignment")) m.alignment = gt.at("alignment").get<std::vector<int>>();
    } else if (mode == "pairs") {
      m.truth_mode = TruthMode::kPairs;
      m.pairs = gt.at("pairs").get<std::vector<std::vector<int>>>();
    } else {
      throw FormatError("manifest: unknown ground truth mode '" + mode + "'");
    }
    if (j.contains("preprocess")) {
      const json& p = j.at("preprocess");
      m.preprocess.height = p.value("height", m.preprocess.height);
      m.preprocess.width = p.value("width", m.preprocess.width);
      m.preprocess.scale = p.value("scale", m.preprocess.scale);
      if (p.contains("mean")) m.preprocess.mean = p.at("mean").get<std::vector<float>>();
      if (p.contains("std")) m.preprocess.stddev = p.at("std").get<std::vector<float>>();
    }
    (void)m.ground_truth();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  } catch (const ContractError& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()), path.parent_path());
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["name"] = m.name;
  j["references"] = json::array();
  for (const auto& p : m.references) j["references"].push_back(p.string());
  j["queries"] = json::array();
  for (const auto& p : m.queries) j["queries"].push_back(p.string());
  if (m.truth_mode == TruthMode::kTolerance) {
    j["ground_truth"] = {{"mode", "tolerance"}, {"frames", m.tolerance}};
    if (!m.alignment.empty()) j["ground_truth"]["alignment"] = m.alignment;
  } else {
    j["ground_truth"] = {{"mode", "pairs"}, {"pairs", m.pairs}};
  }
  j["preprocess"] = {{"height", m.preprocess.height},
                     {"width", m.preprocess.width},
                     {"scale", m.preprocess.scale}};
  if (!m.preprocess.mean.empty()) j["preprocess"]["mean"] = m.preprocess.mean;
  if (!m.preprocess.stddev.empty()) j["preprocess"]["std"] = m.preprocess.stddev;
  return j.dump(2);
}

PlaceDataset<FloatTensor> load_dataset(const DatasetManifest& manifest) {
  PlaceDataset<FloatTensor> ds;
  ds.name = manifest.name;
  for (const auto& p : manifest.references) {
    ds.reference_ids.push_back(p.filename().string());
    ds.references.push_back(load_image(p, manifest.preprocess));
  }
  for (const auto& p : manifest.queries) {
    ds.query_ids.push_back(p.filename().string());
    ds.queries.push_back(load_image(p, manifest.preprocess));
  }
  ds.truth = manifest.ground_truth();
  return ds;
}

// --- reports -----------------------------------------------------------------

std::string format_complexity(const ComplexityReport& r, OutputFormat fmt) {
  if (fmt == OutputFormat::kJson) {
    json j;
    j["layers"] = json::array();
    auto row = [](const LayerCost& c) {
      return json{{"name", c.name},
                  {"params_fp32", c.params_fp32},
                  {"params_1bit", c.params_1bit},
                  {"macs_fp32", c.macs_fp32},
                  {"macs_1bit", c.macs_1bit}};
    };
    for (const LayerCost& c : r.layers) j["layers"].push_back(row(c));
    j["total"] = row(r.total);
    j["first_stage_speedup"] = r.first_stage_speedup;
    j["first_stage_binary_share"] = r.first_stage_binary_share;
    j["first_stage_fp_share"] = r.first_stage_fp_share;
    return j.dump(2) + "\n";
  }
  std::ostringstream os;
  os << "layer,params_fp32,params_1bit,macs_fp32,macs_1bit,macs_fp32_M,macs_1bit_M\n";
  auto line = [&](const LayerCost& c) {
    os << c.name << ',' << c.params_fp32 << ',' << c.params_1bit << ',' << c.macs_fp32 << ','
       << c.macs_1bit << ',' << format_millions(c.macs_fp32) << ','
       << format_millions(c.macs_1bit) << '\n';
  };
  for (const LayerCost& c : r.layers) line(c);
  line(r.total);
  return os.str();
}

std::string format_matches(std::span<const MatchResult> results,
                           std::span<const std::string> query_ids,
                           std::span<const std::string> reference_ids, OutputFormat fmt) {
  auto qid = [&](int q) { return q < static_cast<int>(query_ids.size()) ? query_ids[q] : std::to_string(q); };
  auto rid = [&](int r) {
    return r < static_cast<int>(reference_ids.size()) ? reference_ids[r] : std::to_string(r);
  };
  if (fmt == OutputFormat::kJson) {
    json j = json::array();
    for (const MatchResult& m : results) {
      j.push_back({{"query", qid(m.query)},
                   {"reference", rid(m.reference)},
                   {"query_index", m.query},
                   {"reference_index", m.reference},
                   {"score", m.score},
                   {"correct", m.correct}});
    }
    return j.dump(2) + "\n";
  }
  std::ostringstream os;
  os << "query,reference,query_index,reference_index,score,correct\n";
  for (const MatchResult& m : results) {
    os << qid(m.query) << ',' << rid(m.reference) << ',' << m.query << ',' << m.reference << ','
       << fixed(m.score, 9) << ',' << (m.correct ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string format_metrics(const MetricsReport& m, OutputFormat fmt) {
  if (fmt == OutputFormat::kJson) {
    json j{{"ep", m.ep},     {"auc", m.auc},       {"tp_percent", m.tp_percent},
           {"p_r0", m.p_r0}, {"r_p100", m.r_p100}, {"curve", json::array()}};
    for (const PRPoint& p : m.curve.points) {
      j["curve"].push_back({{"precision", p.precision}, {"recall", p.recall}, {"threshold", p.threshold}});
    }
    return j.dump(2) + "\n";
  }
  std::ostringstream os;
  os << "ep,auc,tp_percent,p_r0,r_p100\n"
     << fixed(m.ep) << ',' << fixed(m.auc) << ',' << fixed(m.tp_percent, 3) << ',' << fixed(m.p_r0)
     << ',' << fixed(m.r_p100) << '\n';
  return os.str();
}

std::string format_bench(const BenchReport& r, OutputFormat fmt) {
  if (fmt == OutputFormat::kJson) {
    auto stats = [](const DurationStats& s) {
      return json{{"median_ms", s.median}, {"mean_ms", s.mean}, {"stddev_ms", s.stddev},
                  {"min_ms", s.min},       {"max_ms", s.max},   {"samples", s.samples}};
    };
    json j;
    j["threads"] = r.threads;
    j["layers"] = json::array();
    for (std::size_t i = 0; i < r.layers.size(); ++i) {
      json e = stats(r.layers[i]);
      e["name"] = r.layer_names[i];
      j["layers"].push_back(e);
    }
    j["total"] = stats(r.total);
    j["first_stage_share"] = r.first_stage_share;
    if (r.energy_mj) j["energy_mj"] = *r.energy_mj;
    return j.dump(2) + "\n";
  }
  std::ostringstream os;
  os << "layer,median_ms,mean_ms,stddev_ms,min_ms,max_ms,samples\n";
  auto line = [&](const std::string& name, const DurationStats& s) {
    os << name << ',' << fixed(s.median, 4) << ',' << fixed(s.mean, 4) << ',' << fixed(s.stddev, 4)
       << ',' << fixed(s.min, 4) << ',' << fixed(s.max, 4) << ',' << s.samples << '\n';
  };
  for (std::size_t i = 0; i < r.layers.size(); ++i) line(r.layer_names[i], r.layers[i]);
  line("total", r.total);
  os << "# threads=" << r.threads << " first_stage_share=" << fixed(r.first_stage_share, 4);
  if (r.energy_mj) os << " energy_mj=" << fixed(*r.energy_mj, 4);
  os << '\n';
  return os.str();
}

std::string format_sweep(std::span<const SweepRow> rows, OutputFormat fmt) {
  if (fmt == OutputFormat::kJson) {
    json j = json::array();
    for (const SweepRow& r : rows) {
      json e{{"d", r.depth_multiplier},
             {"first_ms", r.first_ms},
             {"total_ms", r.total_ms},
             {"params_fp32", r.first_stage.params_fp32},
             {"params_1bit", r.first_stage.params_1bit},
             {"macs_fp32", r.first_stage.macs_fp32},
             {"macs_1bit", r.first_stage.macs_1bit}};
      if (r.energy_mj) e["energy_mj"] = *r.energy_mj;
      j.push_back(e);
    }
    return j.dump(2) + "\n";
  }
  std::ostringstream os;
  os << "d,first_ms,total_ms,energy_mj,params_fp32,params_1bit,macs_fp32,macs_1bit\n";
  for (const SweepRow& r : rows) {
    os << r.depth_multiplier << ',' << fixed(r.first_ms, 4) << ',' << fixed(r.total_ms, 4) << ','
       << (r.energy_mj ? fixed(*r.energy_mj, 4) : std::string()) << ','
       << r.first_stage.params_fp32 << ',' << r.first_stage.params_1bit << ','
       << r.first_stage.macs_fp32 << ',' << r.first_stage.macs_1bit << '\n';
  }
  return os.str();
}

}  // namespace hbnet
