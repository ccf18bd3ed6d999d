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

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Each check builds its own inputs from fixed seeds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "hbnet/bench.hpp"
#include "hbnet/complexity.hpp"
#include "hbnet/error.hpp"
#include "hbnet/hbds.hpp"
#include "hbnet/modelio.hpp"
#include "hbnet/ops.hpp"
#include "hbnet/train.hpp"
#include "hbnet/vpr.hpp"
#include "oracles.hpp"

namespace {

using namespace hbnet;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// 1. First-stage rows of the complexity table.
Outcome complexity_table() {
  Outcome o;
  const auto t0 = Clock::now();
  struct Row {
    int d;
    Count p32, p1;
    const char *m32, *m1;
  };
  const Row rows[] = {{1, 372, 288, "1.1", "0.9"},      {4, 1488, 1152, "4.4", "3.5"},
                      {8, 2976, 2304, "8.8", "7.0"},    {12, 4464, 3456, "13.2", "10.5"},
                      {24, 8928, 6912, "26.4", "20.9"}, {48, 17856, 13824, "52.7", "41.8"},
                      {0, 34848, 0, "105.4", "0.0"}};
  for (const Row& r : rows) {
    const NetworkSpec spec = r.d ? NetworkSpec::default_spec(FirstStage::kHBDS, r.d)
                                 : NetworkSpec::default_spec(FirstStage::kStandardConv);
    const LayerCost c = network_report(spec).first_stage();
    // Integer products straight from the layer geometry (55x55 output, 3 input channels).
    const Count want32 = r.d ? Count{121} * 3 * 55 * 55 * r.d : Count{121} * 3 * 55 * 55 * 96;
    const Count want1 = r.d ? Count{3} * r.d * 55 * 55 * 96 : 0;
    const std::string tag = "d=" + std::to_string(r.d);
    o.require(c.params_fp32 == r.p32, tag + " fp32 params " + std::to_string(c.params_fp32));
    o.require(c.params_1bit == r.p1, tag + " 1-bit params " + std::to_string(c.params_1bit));
    o.require(c.macs_fp32 == want32, tag + " fp32 MACs " + std::to_string(c.macs_fp32));
    o.require(c.macs_1bit == want1, tag + " 1-bit MACs " + std::to_string(c.macs_1bit));
    o.require(format_millions(c.macs_fp32) == r.m32, tag + " fp32 MACs rounding");
    o.require(format_millions(c.macs_1bit) == r.m1, tag + " 1-bit MACs rounding");
  }
  const double s = seconds_since(t0);
  o.require(s < 1.0, fmt("runtime %.3f s", s));
  if (o.pass) o.detail = fmt("7 rows exact in %.4f s", s);
  return o;
}

// 2. Exact rational speedups and shares.
Outcome ratios() {
  Outcome o;
  o.require(speedup_fraction(11, 96, 1) == Fraction{11616, 217}, "speedup d=1");
  o.require(speedup_fraction(11, 96, 12) == Fraction{11616, 2604}, "speedup d=12");
  o.require(binary_share_fraction(11, 96) + fp_share_fraction(11, 96) == Fraction{1, 1},
            "shares sum");
  if (o.pass) {
    o.detail = fmt("11616/217=%.4f, 11616/2604=%.4f, shares sum to 1", speedup_ratio(11, 96, 1),
                   speedup_ratio(11, 96, 12));
  }
  return o;
}

// 3. Packed binary convolution against float convolution of the unpacked signs.
Outcome kernel_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  const int ks[] = {1, 3, 5, 11};
  std::uniform_int_distribution<int> kpick(0, 3), cdist(1, 128), codist(1, 16), sdist(1, 2);
  int done = 0;
  while (done < 1000) {
    const int k = ks[kpick(rng)];
    const int pad = std::uniform_int_distribution<int>(0, k / 2)(rng);
    const int lo = std::max(1, k - 2 * pad);
    const int h = std::uniform_int_distribution<int>(lo, 16)(rng);
    const int w = std::uniform_int_distribution<int>(lo, 16)(rng);
    const int ci = cdist(rng), co = codist(rng), s = sdist(rng);
    const FloatTensor x = testing::sign_tensor(testing::random_tensor({h, w, ci}, rng));
    const FloatTensor wt = testing::random_tensor({k, k, ci * co}, rng);
    const ConvSpec spec{k, s, pad, ci, co, false};
    const FloatTensor got = binary_conv2d(binarize(x), pack_filters(wt, k, ci, co), spec);
    const FloatTensor want = conv2d(unpack(binarize(x)), testing::sign_tensor(wt), {}, spec);
    if (got != want) {
      o.require(false, fmt("mismatch at h=%g w=%g k=%g c_i=%g", h, w, k, ci));
      break;
    }
    ++done;
  }
  const double s = seconds_since(t0);
  o.require(s < 60.0, fmt("runtime %.1f s", s));
  if (o.pass) o.detail = fmt("%g instances integer-exact in %.2f s", done, s);
  return o;
}

// 4. Folded thresholds against batchnorm followed by binarize.
Outcome fused_threshold() {
  Outcome o;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<float> u(-4.0f, 4.0f), v(0.0f, 5.0f);
  std::uniform_int_distribution<int> kind(0, 3);
  int neg = 0, zero = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const int c = 1 + i % 7;
    BatchNormParams p;
    p.epsilon = i % 3 == 0 ? 0.0f : 1e-3f;
    for (int ch = 0; ch < c; ++ch) {
      float g = u(rng);
      const int kd = kind(rng);
      if (kd == 0) g = 0.0f;
      if (kd == 1) g = -std::abs(g);
      neg += g < 0.0f;
      zero += g == 0.0f;
      p.gamma.push_back(g);
      p.beta.push_back(kd == 2 ? 0.0f : u(rng));
      p.running_mean.push_back(u(rng));
      p.running_var.push_back(v(rng) + (p.epsilon == 0.0f ? 0.01f : 0.0f));
    }
    FloatTensor x({1, 4, c});
    for (int px = 0; px < 4; ++px)
      for (int ch = 0; ch < c; ++ch) x.at(0, px, ch) = px == 0 ? p.running_mean[ch] : u(rng);
    const BitTensor fused = threshold_binarize(x, fold_bn_binarize(p));
    const BitTensor unfused = binarize(batchnorm(x, p));
    if (fused != unfused) {
      o.require(false, "disagreement at draw " + std::to_string(i));
      break;
    }
  }
  o.require(neg > 0 && zero > 0, "draws must include gamma < 0 and gamma = 0");
  if (o.pass) {
    o.detail = std::to_string(draws) + " draws bit-exact (" + std::to_string(neg) + " gamma<0, " +
               std::to_string(zero) + " gamma=0 channels)";
  }
  return o;
}

// 5. First-stage latency share, baseline against HB-DS d=12.
Outcome latency_share() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(5);
  const std::vector<FloatTensor> inputs{testing::random_tensor({227, 227, 3}, rng, 0.0f, 1.0f)};
  BenchConfig cfg;  // 10 warm-up runs, 100 measured runs, default threads
  const Network base = build_random_network(NetworkSpec::default_spec(FirstStage::kStandardConv), 1);
  const Network hb = build_random_network(NetworkSpec::default_spec(FirstStage::kHBDS, 12), 1);
  const BenchReport rb = time_inference(base, inputs, cfg);
  const BenchReport rh = time_inference(hb, inputs, cfg);
  const double s = seconds_since(t0);
  o.require(rb.first_stage_share > 0.6, fmt("baseline share %.3f", rb.first_stage_share));
  o.require(rh.first_stage_share < rb.first_stage_share,
            fmt("hbds share %.3f not below baseline", rh.first_stage_share));
  o.require(rh.total.median <= 0.7 * rb.total.median,
            fmt("hbds total %.2f ms vs baseline %.2f ms", rh.total.median, rb.total.median));
  o.require(s < 120.0, fmt("runtime %.1f s", s));
  o.detail = (o.pass ? "" : o.detail + " | ") +
             fmt("baseline %.2f ms (first %.0f%%), hbds12 %.2f ms (first %.0f%%)", rb.total.median,
                 100 * rb.first_stage_share, rh.total.median, 100 * rh.first_stage_share);
  return o;
}

// 6. Metrics against a brute-force threshold sweep.
Outcome metrics_oracle() {
  Outcome o;
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> size(1, 50), grid(0, 20);
  std::bernoulli_distribution coin(0.55);
  for (int set = 0; set < 100 && o.pass; ++set) {
    std::vector<MatchResult> res;
    const int n = size(rng);
    for (int i = 0; i < n; ++i) res.push_back({i, i, grid(rng) / 20.0, coin(rng)});
    const MetricsReport m = evaluate(res);
    const testing::BruteMetrics b = testing::brute_force_metrics(res);
    const double err = std::max({std::abs(m.ep - b.ep), std::abs(m.auc - b.auc),
                                 std::abs(m.tp_percent - b.tp_percent)});
    o.require(err <= 1e-9, fmt("set %g differs by %g", set, err));
  }
  const std::vector<MatchResult> hand = {
      {0, 0, 0.9, true}, {1, 1, 0.8, false}, {2, 2, 0.7, true}, {3, 3, 0.6, true}};
  const MetricsReport h = evaluate(hand);
  o.require(std::abs(h.ep - 0.625) < 1e-12, fmt("hand EP %.6f", h.ep));
  o.require(std::abs(h.tp_percent - 75.0) < 1e-12, fmt("hand TP%% %.3f", h.tp_percent));
  if (o.pass) o.detail = "100 random sets within 1e-9; hand example EP 0.625, TP 75%";
  return o;
}

// Synthetic "place" images with a natural-looking 1/f spectrum: value noise
// summed over octaves, amplitude proportional to cell size, then a random
// color mix.
FloatTensor place_image(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  FloatTensor img({227, 227, 3});
  float mix[3][3];
  for (auto& row : mix)
    for (float& v : row) v = u(rng);
  for (int cell = 128; cell >= 4; cell /= 2) {
    const int g = 227 / cell + 2;
    std::vector<float> grid(static_cast<std::size_t>(g) * g * 3);
    for (float& v : grid) v = u(rng);
    const float amp = 0.5f * cell / 128.0f;
    for (int y = 0; y < 227; ++y)
      for (int x = 0; x < 227; ++x) {
        const float fy = static_cast<float>(y) / cell, fx = static_cast<float>(x) / cell;
        const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
        const float ty = fy - y0, tx = fx - x0;
        for (int c = 0; c < 3; ++c) {
          auto at = [&](int yy, int xx) { return grid[(static_cast<std::size_t>(yy) * g + xx) * 3 + c]; };
          img.at(y, x, c) += amp * ((1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                                    ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1)));
        }
      }
  }
  for (int y = 0; y < 227; ++y)
    for (int x = 0; x < 227; ++x) {
      const float p[3] = {img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)};
      for (int c = 0; c < 3; ++c) {
        float v = 0.5f;
        for (int k = 0; k < 3; ++k) v += 0.5f * mix[c][k] * p[k];
        img.at(y, x, c) = std::clamp(v, 0.0f, 1.0f);
      }
    }
  return img;
}

// Adds white Gaussian noise at exactly `snr_db` relative to the image variance
// (signal power excludes the mean, so a brightness offset cannot inflate it).
FloatTensor add_noise(const FloatTensor& img, double snr_db, std::mt19937_64& rng) {
  double mean = 0.0, var = 0.0;
  for (float v : img.data()) mean += v;
  mean /= img.size();
  for (float v : img.data()) var += (v - mean) * (v - mean);
  var /= img.size();
  const double sigma = std::sqrt(var / std::pow(10.0, snr_db / 10.0));
  std::normal_distribution<double> g(0.0, sigma);
  FloatTensor out = img;
  for (float& v : out.data()) v = static_cast<float>(v + g(rng));
  return out;
}

// 7. Random-weight HB-DS d=12 network on noisy self-matching places.
Outcome end_to_end() {
  Outcome o;
  const int n = 40;
  std::mt19937_64 rng(7);
  std::vector<FloatTensor> refs, queries;
  for (int i = 0; i < n; ++i) refs.push_back(place_image(rng));
  for (int i = 0; i < n; ++i) queries.push_back(add_noise(refs[i], 20.0, rng));
  // Batchnorm statistics come from separate places, never from the evaluation set.
  std::vector<FloatTensor> calib;
  for (int i = 0; i < 8; ++i) calib.push_back(place_image(rng));
  const Network net = calibrate_batchnorm(
      build_random_network(NetworkSpec::default_spec(FirstStage::kHBDS, 12), 12), calib);
  auto describe = [&](const std::vector<FloatTensor>& imgs) {
    std::vector<Descriptor> d;
    for (const FloatTensor& im : imgs) d.push_back(extract_descriptor(net.forward(im).features));
    return d;
  };
  const std::vector<Descriptor> rd = describe(refs);
  const std::vector<Descriptor> qd = describe(queries);
  const GroundTruth truth = GroundTruth::from_tolerance(n, n, 0);
  const MetricsReport m = evaluate(match_all(qd, rd, truth));

  // Shuffled: query i is paired with a ground truth that points elsewhere.
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::rotate(perm.begin(), perm.begin() + 1, perm.end());
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int i = 0; i < n; ++i) {
    if (perm[i] == i) std::swap(perm[i], perm[(i + 1) % n]);
  }
  std::vector<Descriptor> shuffled;
  for (int i = 0; i < n; ++i) shuffled.push_back(qd[perm[i]]);
  const MetricsReport wrong = evaluate(match_all(shuffled, rd, truth));

  o.require(m.tp_percent >= 95.0, fmt("TP%% %.1f", m.tp_percent));
  o.require(m.ep >= 0.9, fmt("EP %.3f", m.ep));
  o.require(wrong.tp_percent <= 10.0, fmt("shuffled TP%% %.1f", wrong.tp_percent));
  o.detail = (o.pass ? "" : o.detail + " | ") +
             fmt("%g places at 20 dB: TP %.1f%%, EP %.3f; shuffled TP %.1f%%", n, m.tp_percent,
                 m.ep, wrong.tp_percent);
  return o;
}

// 8. Analytic against central-difference gradients, and the STE rule.
Outcome gradients() {
  Outcome o;
  std::mt19937_64 rng(8);
  auto batch = [&](TensorShape s, int n, int classes) {
    std::pair<std::vector<FloatTensor>, std::vector<int>> b;
    for (int i = 0; i < n; ++i) {
      b.first.push_back(testing::random_tensor(s, rng));
      b.second.push_back(i % classes);
    }
    return b;
  };
  NetworkSpec conv;
  conv.input = {8, 8, 3};
  conv.layers = {LayerDesc::standard_conv(3, 2, 6, 1)};
  conv.tap = 0;
  NetworkSpec hb;
  hb.input = {10, 10, 3};
  hb.layers = {LayerDesc::hbds(3, 2, 6, 2), LayerDesc::max_pool(2, 1),
               LayerDesc::binary_conv(3, 1, 1, 5)};
  hb.tap = 2;
  double worst = 0.0;
  for (const NetworkSpec& spec : {conv, hb}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      TrainableNet net(spec, 3, seed, Surrogate::kHardtanh);
      auto [x, y] = batch(spec.input, 4, 3);
      const GradCheckResult r = gradient_check(net, x, y, GradCheckOptions{32});
      worst = std::max(worst, r.max_relative_error);
    }
  }
  o.require(worst < 1e-4, fmt("max relative error %.2e", worst));
  bool ste = true;
  for (double x = -3.0; x <= 3.0; x += 0.125) {
    for (double up : {-2.5, 0.5, 7.0}) {
      ste = ste && ste_backward(x, up) == (std::abs(x) <= 1.0 ? up : 0.0);
    }
  }
  o.require(ste, "STE backward is not the clipped identity");
  if (o.pass) o.detail = fmt("conv, depthwise and BN max relative error %.2e; STE exact", worst);
  return o;
}

// 9. Toy training accuracy and determinism.
Outcome toy_training() {
  Outcome o;
  const auto t0 = Clock::now();
  NetworkSpec spec;
  spec.input = {32, 32, 3};
  spec.layers = {LayerDesc::hbds(3, 2, 16, 2), LayerDesc::max_pool(3, 2)};
  spec.tap = 1;
  const ToyDataset data = make_blob_dataset(64, 32, 9);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 9;
  const TrainResult a = train_toy(spec, data, cfg);
  const TrainResult b = train_toy(spec, data, cfg);
  bool same = a.train_accuracy == b.train_accuracy;
  for (std::size_t i = 0; i < a.model.params().size(); ++i) {
    same = same && a.model.params()[i].value == b.model.params()[i].value;
  }
  const double s = seconds_since(t0);
  o.require(a.train_accuracy >= 0.95, fmt("accuracy %.3f", a.train_accuracy));
  o.require(same, "two runs with one seed differ");
  o.require(s < 120.0, fmt("runtime %.1f s", s));
  if (o.pass) {
    o.detail = fmt("accuracy %.1f%% after 50 epochs, deterministic, %.1f s", 100 * a.train_accuracy,
                   s);
  }
  return o;
}

// 10. Weight persistence and corruption handling.
Outcome persistence() {
  Outcome o;
  const Network net = build_random_network(NetworkSpec::default_spec(FirstStage::kHBDS, 12), 10);
  const std::vector<std::uint8_t> bytes = save_weights(net);
  const Network back = load_weights(bytes);
  std::mt19937_64 rng(10);
  const FloatTensor x = testing::random_tensor({227, 227, 3}, rng, 0.0f, 1.0f);
  o.require(extract_descriptor(net.forward(x).features).values ==
                extract_descriptor(back.forward(x).features).values,
            "descriptors differ after roundtrip");

  // Returns the name of the error class a corrupted file raises.
  auto raised = [](const std::vector<std::uint8_t>& b) -> std::string {
    try {
      load_weights(b);
    } catch (const ChecksumError&) {
      return "ChecksumError";
    } catch (const VersionError&) {
      return "VersionError";
    } catch (const FormatError&) {
      return "FormatError";
    } catch (const std::exception& e) {
      return std::string("other: ") + e.what();
    }
    return "accepted";
  };
  auto truncated = bytes;
  truncated.resize(bytes.size() - 17);
  auto flipped = bytes;
  flipped[bytes.size() - 5] ^= 0x01;
  auto magic = bytes;
  magic[1] = 'Z';
  auto version = bytes;
  version[4] = 9;
  o.require(raised(truncated) == "ChecksumError", "truncated: " + raised(truncated));
  o.require(raised(flipped) == "ChecksumError", "bit flip: " + raised(flipped));
  o.require(raised(magic) == "FormatError", "magic: " + raised(magic));
  o.require(raised(version) == "VersionError", "version: " + raised(version));
  if (o.pass) {
    o.detail = "descriptors bit-identical; truncation/bit flip -> ChecksumError, magic -> "
               "FormatError, version -> VersionError";
  }
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"complexity table reproduction", complexity_table},
      {"speedup and share rationals", ratios},
      {"binary kernel oracle equivalence", kernel_oracle},
      {"fused threshold equivalence", fused_threshold},
      {"first-stage latency share", latency_share},
      {"metrics oracle", metrics_oracle},
      {"end-to-end matching sanity", end_to_end},
      {"gradient checks", gradients},
      {"toy training", toy_training},
      {"weight persistence", persistence},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failures += !r.pass;
    std::printf("%s %2zu %s: %s\n", r.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                r.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
