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

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hbnet/complexity.hpp"
#include "hbnet/hbds.hpp"

namespace hbnet {

struct BenchConfig {
  int warmup = 10;
  int runs = 100;
  /// Engine threads; 1 is single-thread ("1T") mode, 0 the OpenMP default.
  int threads = 0;
  /// Platform power in watts; energy is reported only when > 0.
  double power_watts = 0.0;
};

/// Milliseconds.
struct DurationStats {
  double median = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t samples = 0;
};

DurationStats summarize(std::span<const double> samples_ms);

struct BenchReport {
  std::vector<std::string> layer_names;
  std::vector<DurationStats> layers;
  /// Wall time of the whole forward call, timed separately from the layers.
  DurationStats total;
  /// Median first-layer time over median total time.
  double first_stage_share = 0.0;
  int threads = 1;
  std::optional<double> energy_mj;
};

/// Times only Network::forward over pre-built inputs: cfg.warmup untimed runs,
/// then cfg.runs timed runs cycling through `inputs`.
BenchReport time_inference(const Network& net, std::span<const FloatTensor> inputs,
                           const BenchConfig& cfg);

/// E = P * T. Throws ContractError unless both are positive.
double energy(double t_seconds, double p_watts);

struct SweepRow {
  int depth_multiplier = 0;
  double total_ms = 0.0;
  double first_ms = 0.0;
  std::optional<double> energy_mj;
  LayerCost first_stage;
};

/// Benchmarks `spec_template` with its HB-DS first stage set to each d.
/// Throws ShapeError if the template's first stage is not HB-DS.
std::vector<SweepRow> sweep_depth_multiplier(const NetworkSpec& spec_template,
                                             std::span<const int> depth_multipliers,
                                             const BenchConfig& cfg, std::uint64_t seed);

}  // namespace hbnet
