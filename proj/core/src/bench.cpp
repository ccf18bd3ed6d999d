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

#include "hbnet/bench.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "hbnet/error.hpp"

namespace hbnet {

DurationStats summarize(std::span<const double> samples_ms) {
  DurationStats s;
  s.samples = samples_ms.size();
  if (samples_ms.empty()) return s;
  std::vector<double> v(samples_ms.begin(), samples_ms.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  s.median = n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
  double sq = 0.0;
  for (double x : v) sq += (x - s.mean) * (x - s.mean);
  s.stddev = n > 1 ? std::sqrt(sq / static_cast<double>(n - 1)) : 0.0;
  s.min = v.front();
  s.max = v.back();
  return s;
}

double energy(double t_seconds, double p_watts) {
  if (!(t_seconds > 0.0) || !(p_watts > 0.0)) {
    throw ContractError("energy: time and power must be positive");
  }
  return p_watts * t_seconds;
}

BenchReport time_inference(const Network& net, std::span<const FloatTensor> inputs,
                           const BenchConfig& cfg) {
  if (inputs.empty()) throw ContractError("time_inference: no inputs");
  if (cfg.runs < 1 || cfg.warmup < 0) throw ContractError("time_inference: runs must be >= 1");
  if (cfg.threads < 0) throw ContractError("time_inference: threads must be >= 0");
  using Clock = std::chrono::steady_clock;
  using Ms = std::chrono::duration<double, std::milli>;

  const ExecContext ctx{cfg.threads, nullptr};
  for (int i = 0; i < cfg.warmup; ++i) {
    (void)net.forward(inputs[i % inputs.size()], false, ctx);
  }

  const int layers = net.spec().tap + 1;
  std::vector<std::vector<double>> per_layer(layers);
  std::vector<double> totals;
  totals.reserve(cfg.runs);
  for (int r = 0; r < cfg.runs; ++r) {
    const FloatTensor& x = inputs[r % inputs.size()];
    const auto start = Clock::now();
    const ForwardResult out = net.forward(x, true, ctx);
    totals.push_back(Ms(Clock::now() - start).count());
    for (int l = 0; l < layers; ++l) {
      per_layer[l].push_back(Ms(out.timings[l].duration).count());
    }
  }

  BenchReport report;
  report.threads = ctx.resolved_threads();
  for (int l = 0; l < layers; ++l) {
    report.layer_names.push_back(layer_name(net.spec(), l));
    report.layers.push_back(summarize(per_layer[l]));
  }
  report.total = summarize(totals);
  report.first_stage_share =
      report.total.median > 0.0
          ? std::clamp(report.layers.front().median / report.total.median, 0.0, 1.0)
          : 0.0;
  if (cfg.power_watts > 0.0) {
    report.energy_mj = energy(report.total.median / 1e3, cfg.power_watts) * 1e3;
  }
  return report;
}

std::vector<SweepRow> sweep_depth_multiplier(const NetworkSpec& spec_template,
                                             std::span<const int> depth_multipliers,
                                             const BenchConfig& cfg, std::uint64_t seed) {
  if (spec_template.layers.empty() || spec_template.layers.front().kind != LayerKind::kHBDS) {
    throw ShapeError("sweep_depth_multiplier: template first stage must be HB-DS");
  }
  // One fixed input per sweep so rows differ only by d.
  FloatTensor input(spec_template.input);
  std::mt19937_64 rng(seed ^ 0x5eedu);
  std::uniform_real_distribution<float> uniform(0.0f, 1.0f);
  for (float& v : input.data()) v = uniform(rng);
  const std::vector<FloatTensor> inputs{input};

  std::vector<SweepRow> rows;
  for (int d : depth_multipliers) {
    NetworkSpec spec = spec_template;
    spec.layers.front().depth_multiplier = d;
    const Network net = build_random_network(spec, seed);
    const BenchReport rep = time_inference(net, inputs, cfg);
    SweepRow row;
    row.depth_multiplier = d;
    row.total_ms = rep.total.median;
    row.first_ms = rep.layers.front().median;
    row.energy_mj = rep.energy_mj;
    row.first_stage = network_report(spec).first_stage();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace hbnet
