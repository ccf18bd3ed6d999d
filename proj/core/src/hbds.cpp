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

#include "hbnet/hbds.hpp"

#include <cmath>
#include <random>
#include <string>

#include "hbnet/error.hpp"

namespace hbnet {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

void check_bn(const BatchNormParams& bn, int channels, const std::string& where) {
  bn.validate();
  if (bn.channels() != channels) {
    throw ShapeError(where + ": batchnorm has " + std::to_string(bn.channels()) +
                     " channels, expected " + std::to_string(channels));
  }
}

void check_hbds_weights(const HBDSSpec& spec, int in_channels, const HBDSWeights& w) {
  const int k = spec.kernel;
  const int dc = in_channels * spec.depth_multiplier;
  if (w.depthwise.shape() != TensorShape{k, k, dc}) {
    throw ShapeError("hbds: depthwise weights do not match (k, k, c_i * d)");
  }
  if (w.bias.size() != static_cast<std::size_t>(dc)) {
    throw ShapeError("hbds: depthwise bias must have c_i * d entries");
  }
  check_bn(w.bn, dc, "hbds");
  if (w.pointwise.shape() != TensorShape{spec.out_channels, 1, dc}) {
    throw ShapeError("hbds: pointwise filter bank does not match (c_o, 1, c_i * d)");
  }
}

ConvSpec pointwise_spec(const HBDSSpec& spec, int in_channels) {
  return ConvSpec{1, 1, 0, in_channels * spec.depth_multiplier, spec.out_channels, false};
}

DepthwiseSpec depthwise_spec(const HBDSSpec& spec) {
  return DepthwiseSpec{spec.kernel, spec.stride, 0, spec.depth_multiplier, true};
}

HBDSSpec hbds_spec(const LayerDesc& l) {
  return HBDSSpec{l.kernel, l.stride, l.out_channels, l.depth_multiplier};
}

ConvSpec conv_spec(const LayerDesc& l, int in_channels) {
  return ConvSpec{l.kernel, l.stride, l.padding, in_channels, l.out_channels, false};
}

}  // namespace

HBDSModule::HBDSModule(HBDSSpec s, HBDSWeights w) : spec(s), weights(std::move(w)) {
  const int dc = weights.depthwise.channels();
  if (spec.depth_multiplier < 1 || dc % spec.depth_multiplier != 0) {
    throw ShapeError("hbds: depthwise channels not divisible by depth multiplier");
  }
  check_hbds_weights(spec, dc / spec.depth_multiplier, weights);
  fold = fold_bn_binarize(weights.bn);
}

FloatTensor hbds_forward(const FloatTensor& x, const HBDSModule& module, const ExecContext& ctx) {
  const int ci = x.channels();
  if (ci * module.spec.depth_multiplier != module.weights.depthwise.channels()) {
    throw ShapeError("hbds: input channel count does not match depthwise weights");
  }
  const FloatTensor dw = depthwise_conv2d(x, module.weights.depthwise, module.weights.bias,
                                          depthwise_spec(module.spec), ctx);
  const BitTensor bits = threshold_binarize(dw, module.fold, ctx);
  return binary_conv2d(bits, module.weights.pointwise, pointwise_spec(module.spec, ci), ctx);
}

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kStandardConv: return "conv";
    case LayerKind::kHBDS: return "hbds";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kBinaryConv: return "binary_conv";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "conv") return LayerKind::kStandardConv;
  if (s == "hbds") return LayerKind::kHBDS;
  if (s == "maxpool") return LayerKind::kMaxPool;
  if (s == "binary_conv") return LayerKind::kBinaryConv;
  throw FormatError("unknown layer kind '" + s + "'");
}

LayerDesc LayerDesc::standard_conv(int k, int s, int c_o, int pad) {
  return {LayerKind::kStandardConv, k, s, pad, c_o, 1};
}
LayerDesc LayerDesc::hbds(int k, int s, int c_o, int d) {
  return {LayerKind::kHBDS, k, s, 0, c_o, d};
}
LayerDesc LayerDesc::max_pool(int k, int s) { return {LayerKind::kMaxPool, k, s, 0, 0, 1}; }
LayerDesc LayerDesc::binary_conv(int k, int s, int pad, int c_o) {
  return {LayerKind::kBinaryConv, k, s, pad, c_o, 1};
}

NetworkSpec NetworkSpec::default_spec(FirstStage first, int depth_multiplier) {
  NetworkSpec spec;
  spec.input = {227, 227, 3};
  spec.layers = {
      first == FirstStage::kHBDS ? LayerDesc::hbds(11, 4, 96, depth_multiplier)
                                 : LayerDesc::standard_conv(11, 4, 96),
      LayerDesc::max_pool(3, 2),
      LayerDesc::binary_conv(5, 1, 2, 256),
      LayerDesc::max_pool(3, 2),
      LayerDesc::binary_conv(3, 1, 1, 384),
      LayerDesc::max_pool(3, 2),
  };
  spec.tap = 5;
  return spec;
}

std::vector<TensorShape> NetworkSpec::layer_shapes() const {
  validate_shape(input);
  if (layers.empty()) throw ShapeError("network has no layers");
  if (tap < 0 || tap >= static_cast<int>(layers.size())) {
    throw ShapeError("tap layer index " + std::to_string(tap) + " out of range");
  }
  std::vector<TensorShape> shapes;
  TensorShape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDesc& l = layers[i];
    const bool first_stage = l.kind == LayerKind::kStandardConv || l.kind == LayerKind::kHBDS;
    if (first_stage != (i == 0)) {
      throw ShapeError("layer " + std::to_string(i) +
                       ": a network has exactly one first stage, at index 0");
    }
    switch (l.kind) {
      case LayerKind::kStandardConv:
      case LayerKind::kBinaryConv:
        cur = conv_spec(l, cur.channels).output_shape(cur);
        break;
      case LayerKind::kHBDS: {
        if (l.out_channels < 1) throw ShapeError("hbds out_channels must be >= 1");
        cur = depthwise_spec(hbds_spec(l)).output_shape(cur);
        cur.channels = l.out_channels;
        break;
      }
      case LayerKind::kMaxPool:
        if (l.kernel < 1 || l.stride < 1 || cur.height < l.kernel || cur.width < l.kernel) {
          throw ShapeError("layer " + std::to_string(i) + ": pooling window does not fit");
        }
        cur = {window_output(cur.height, l.kernel, l.stride, 0),
               window_output(cur.width, l.kernel, l.stride, 0), cur.channels};
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

std::string layer_name(const NetworkSpec& spec, int index) {
  const LayerDesc& l = spec.layers.at(index);
  const std::string n = std::to_string(index / 2 + 1);
  switch (l.kind) {
    case LayerKind::kStandardConv: return "conv" + n;
    case LayerKind::kHBDS: return "hbds" + n;
    case LayerKind::kMaxPool: return "pool" + n;
    case LayerKind::kBinaryConv: return "bconv" + n;
  }
  return "layer" + std::to_string(index);
}

Network::Network(NetworkSpec spec, std::vector<LayerWeights> weights)
    : spec_(std::move(spec)), weights_(std::move(weights)) {
  shapes_ = spec_.layer_shapes();
  if (weights_.size() != spec_.layers.size()) {
    throw ShapeError("network has " + std::to_string(spec_.layers.size()) + " layers but " +
                     std::to_string(weights_.size()) + " weight records");
  }
  folds_.resize(weights_.size());
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const LayerDesc& l = spec_.layers[i];
    const int ci = i == 0 ? spec_.input.channels : shapes_[i - 1].channels;
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
    std::visit(
        Overloaded{
            [&](const PoolWeights&) {
              if (l.kind != LayerKind::kMaxPool) throw ShapeError(where + ": missing weights");
            },
            [&](const StandardConvWeights& w) {
              if (l.kind != LayerKind::kStandardConv) throw ShapeError(where + ": wrong record");
              if (w.weights.shape() != TensorShape{l.kernel, l.kernel, ci * l.out_channels}) {
                throw ShapeError(where + ": weight shape mismatch");
              }
            },
            [&](const HBDSWeights& w) {
              if (l.kind != LayerKind::kHBDS) throw ShapeError(where + ": wrong record");
              check_hbds_weights(hbds_spec(l), ci, w);
              folds_[i] = fold_bn_binarize(w.bn);
            },
            [&](const BinaryConvWeights& w) {
              if (l.kind != LayerKind::kBinaryConv) throw ShapeError(where + ": wrong record");
              check_bn(w.bn, ci, where);
              if (w.filters.shape() != TensorShape{l.out_channels, l.kernel * l.kernel, ci}) {
                throw ShapeError(where + ": filter bank shape mismatch");
              }
              folds_[i] = fold_bn_binarize(w.bn);
            },
        },
        weights_[i]);
  }
}

FloatTensor Network::run_layer(int index, const FloatTensor& x, const ExecContext& ctx) const {
  const LayerDesc& l = spec_.layers[index];
  const LayerWeights& lw = weights_[index];
  switch (l.kind) {
    case LayerKind::kStandardConv:
      return conv2d(x, std::get<StandardConvWeights>(lw).weights, {}, conv_spec(l, x.channels()),
                    ctx);
    case LayerKind::kHBDS: {
      const auto& w = std::get<HBDSWeights>(lw);
      const HBDSSpec hs = hbds_spec(l);
      const FloatTensor dw = depthwise_conv2d(x, w.depthwise, w.bias, depthwise_spec(hs), ctx);
      const BitTensor bits = threshold_binarize(dw, folds_[index], ctx);
      return binary_conv2d(bits, w.pointwise, pointwise_spec(hs, x.channels()), ctx);
    }
    case LayerKind::kMaxPool:
      return maxpool(x, l.kernel, l.stride, ctx);
    case LayerKind::kBinaryConv: {
      const auto& w = std::get<BinaryConvWeights>(lw);
      const BitTensor bits = threshold_binarize(x, folds_[index], ctx);
      return binary_conv2d(bits, w.filters, conv_spec(l, x.channels()), ctx);
    }
  }
  throw ContractError("unknown layer kind");
}

ForwardResult Network::forward(const FloatTensor& x, bool timing, const ExecContext& ctx) const {
  if (x.shape() != spec_.input) throw ShapeError("forward: input shape does not match network");
  using Clock = std::chrono::steady_clock;
  ForwardResult result;
  FloatTensor cur = x;
  for (int i = 0; i <= spec_.tap; ++i) {
    const auto start = timing ? Clock::now() : Clock::time_point{};
    cur = run_layer(i, cur, ctx);
    if (timing) {
      result.timings.push_back({layer_name(spec_, i), Clock::now() - start});
    }
  }
  result.features = std::move(cur);
  return result;
}

std::vector<LayerWeights> random_weights(const NetworkSpec& spec, std::uint64_t seed) {
  const std::vector<TensorShape> shapes = spec.layer_shapes();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uniform(-1.0f, 1.0f);
  auto fill = [&](TensorShape s) {
    FloatTensor t(s);
    for (float& v : t.data()) v = uniform(rng);
    return t;
  };
  std::vector<LayerWeights> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& l = spec.layers[i];
    const int ci = i == 0 ? spec.input.channels : shapes[i - 1].channels;
    switch (l.kind) {
      case LayerKind::kStandardConv:
        out.emplace_back(StandardConvWeights{fill({l.kernel, l.kernel, ci * l.out_channels})});
        break;
      case LayerKind::kHBDS: {
        const int dc = ci * l.depth_multiplier;
        HBDSWeights w;
        w.depthwise = fill({l.kernel, l.kernel, dc});
        w.bias.assign(dc, 0.0f);
        w.bn = BatchNormParams::identity(dc, 1e-3f);
        w.pointwise = pack_filters(fill({1, 1, dc * l.out_channels}), 1, dc, l.out_channels);
        out.emplace_back(std::move(w));
        break;
      }
      case LayerKind::kMaxPool:
        out.emplace_back(PoolWeights{});
        break;
      case LayerKind::kBinaryConv: {
        BinaryConvWeights w;
        w.bn = BatchNormParams::identity(ci, 1e-3f);
        w.filters = pack_filters(fill({l.kernel, l.kernel, ci * l.out_channels}), l.kernel, ci,
                                 l.out_channels);
        out.emplace_back(std::move(w));
        break;
      }
    }
  }
  return out;
}

Network build_network(NetworkSpec spec, std::vector<LayerWeights> weights) {
  return Network(std::move(spec), std::move(weights));
}

Network build_random_network(NetworkSpec spec, std::uint64_t seed) {
  auto weights = random_weights(spec, seed);
  return Network(std::move(spec), std::move(weights));
}

Network calibrate_batchnorm(const Network& net, std::span<const FloatTensor> samples,
                            const ExecContext& ctx) {
  if (samples.empty()) throw ContractError("calibrate_batchnorm needs at least one sample");
  const NetworkSpec& spec = net.spec();
  std::vector<LayerWeights> weights = net.weights();

  // Running statistics of `batch` per channel, written into `bn`.
  auto estimate = [](const std::vector<FloatTensor>& batch, BatchNormParams& bn) {
    const int c = batch.front().channels();
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    std::size_t count = 0;
    for (const FloatTensor& t : batch) {
      auto v = t.data();
      for (std::size_t i = 0; i < v.size(); ++i) {
        sum[i % c] += v[i];
        sq[i % c] += static_cast<double>(v[i]) * v[i];
      }
      count += t.shape().pixels();
    }
    for (int ch = 0; ch < c; ++ch) {
      const double mean = sum[ch] / count;
      bn.running_mean[ch] = static_cast<float>(mean);
      bn.running_var[ch] = static_cast<float>(std::max(0.0, sq[ch] / count - mean * mean));
    }
  };

  std::vector<FloatTensor> acts(samples.begin(), samples.end());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& l = spec.layers[i];
    if (auto* w = std::get_if<HBDSWeights>(&weights[i])) {
      const HBDSSpec hs = hbds_spec(l);
      std::vector<FloatTensor> pre;
      for (const FloatTensor& a : acts) {
        pre.push_back(depthwise_conv2d(a, w->depthwise, w->bias, depthwise_spec(hs), ctx));
      }
      estimate(pre, w->bn);
    } else if (auto* b = std::get_if<BinaryConvWeights>(&weights[i])) {
      estimate(acts, b->bn);
    }
    if (i + 1 < spec.layers.size()) {
      // Re-run the prefix with the statistics fixed so far to feed the next layer.
      NetworkSpec prefix_spec = spec;
      prefix_spec.tap = static_cast<int>(i);
      const Network prefix(prefix_spec, weights);
      std::vector<FloatTensor> next;
      for (const FloatTensor& s : samples) next.push_back(prefix.forward(s, false, ctx).features);
      acts = std::move(next);
    }
  }
  return Network(spec, std::move(weights));
}

Descriptor extract_descriptor(const FloatTensor& features, std::string id) {
  double sq = 0.0;
  for (float v : features.data()) sq += static_cast<double>(v) * v;
  if (!(sq > 0.0)) throw ZeroNormError("descriptor: feature map is all zeros");
  const double inv = 1.0 / std::sqrt(sq);
  Descriptor d{std::move(id), {}};
  d.values.reserve(features.size());
  for (float v : features.data()) d.values.push_back(static_cast<float>(v * inv));
  return d;
}

}  // namespace hbnet
