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

#include <gtest/gtest.h>

#include <random>

#include "hbnet/error.hpp"
#include "oracles.hpp"

namespace hbnet {
namespace {

NetworkSpec small_spec(int d) {
  NetworkSpec spec;
  spec.input = {35, 35, 3};
  spec.layers = {LayerDesc::hbds(5, 2, 16, d), LayerDesc::max_pool(3, 2),
                 LayerDesc::binary_conv(3, 1, 1, 32), LayerDesc::max_pool(2, 2)};
  spec.tap = 3;
  return spec;
}

std::vector<FloatTensor> inputs_for(const NetworkSpec& spec, int n) {
  std::mt19937_64 rng(1);
  std::vector<FloatTensor> v;
  for (int i = 0; i < n; ++i) v.push_back(testing::random_tensor(spec.input, rng, 0.0f, 1.0f));
  return v;
}

TEST(Energy, Products) {
  EXPECT_DOUBLE_EQ(energy(1e-3, 1.0), 1e-3);
  EXPECT_NEAR(energy(9.1e-3, 2.538) * 1e3, 23.1, 0.005);
  EXPECT_DOUBLE_EQ(energy(0.5 * 9.1e-3, 2.538), 0.5 * energy(9.1e-3, 2.538));
  EXPECT_THROW(energy(0.0, 1.0), ContractError);
  EXPECT_THROW(energy(1.0, -2.0), ContractError);
}

TEST(Summarize, Statistics) {
  const std::vector<double> s = {4.0, 1.0, 3.0, 2.0};
  const DurationStats d = summarize(s);
  EXPECT_DOUBLE_EQ(d.median, 2.5);
  EXPECT_DOUBLE_EQ(d.mean, 2.5);
  EXPECT_NEAR(d.stddev, 1.2909944487358056, 1e-12);
  EXPECT_EQ(d.min, 1.0);
  EXPECT_EQ(d.max, 4.0);
  EXPECT_EQ(d.samples, 4u);
  const std::vector<double> one = {7.0};
  EXPECT_EQ(summarize(one).stddev, 0.0);
  EXPECT_EQ(summarize(one).median, 7.0);
}

TEST(TimeInference, SingleRunReport) {
  const NetworkSpec spec = small_spec(2);
  const Network net = build_random_network(spec, 3);
  const auto in = inputs_for(spec, 2);
  const BenchReport r = time_inference(net, in, BenchConfig{0, 1, 1, 0.0});
  EXPECT_EQ(r.total.samples, 1u);
  EXPECT_EQ(r.total.stddev, 0.0);
  ASSERT_EQ(r.layers.size(), 4u);
  EXPECT_EQ(r.layer_names.front(), "hbds1");
  EXPECT_GE(r.first_stage_share, 0.0);
  EXPECT_LE(r.first_stage_share, 1.0);
  EXPECT_FALSE(r.energy_mj.has_value());
  EXPECT_EQ(r.threads, 1);
}

TEST(TimeInference, EnergyIsPowerTimesMedian) {
  const NetworkSpec spec = small_spec(1);
  const Network net = build_random_network(spec, 3);
  const BenchReport r = time_inference(net, inputs_for(spec, 1), BenchConfig{2, 9, 0, 2.538});
  ASSERT_TRUE(r.energy_mj.has_value());
  EXPECT_DOUBLE_EQ(*r.energy_mj, energy(r.total.median / 1e3, 2.538) * 1e3);
  EXPECT_EQ(r.total.samples, 9u);
  EXPECT_GT(r.total.median, 0.0);
}

TEST(TimeInference, RejectsBadConfig) {
  const NetworkSpec spec = small_spec(1);
  const Network net = build_random_network(spec, 3);
  const auto in = inputs_for(spec, 1);
  EXPECT_THROW(time_inference(net, in, BenchConfig{0, 0, 1, 0.0}), ContractError);
  EXPECT_THROW(time_inference(net, in, BenchConfig{0, 1, -1, 0.0}), ContractError);
  EXPECT_THROW(time_inference(net, {}, BenchConfig{}), ContractError);
}

TEST(Sweep, RowsFollowDepthMultipliers) {
  const std::vector<int> ds = {1, 4, 8, 12, 24, 48};
  NetworkSpec spec = NetworkSpec::default_spec(FirstStage::kHBDS, 1);
  spec.tap = 0;  // first stage only keeps the test quick
  const auto rows = sweep_depth_multiplier(spec, ds, BenchConfig{0, 1, 0, 1.0}, 5);
  ASSERT_EQ(rows.size(), ds.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].depth_multiplier, ds[i]);
    EXPECT_EQ(rows[i].first_stage.macs_fp32, static_cast<Count>(ds[i]) * 1098075u);
    EXPECT_TRUE(rows[i].energy_mj.has_value());
    if (i > 0) EXPECT_GE(rows[i].first_stage.macs_fp32, rows[i - 1].first_stage.macs_fp32);
  }
  const std::vector<int> single = {3};
  EXPECT_EQ(sweep_depth_multiplier(small_spec(1), single, BenchConfig{0, 1, 0, 0.0}, 1).size(), 1u);
}

TEST(Sweep, RequiresHbdsTemplate) {
  const std::vector<int> ds = {1};
  EXPECT_THROW(sweep_depth_multiplier(NetworkSpec::default_spec(FirstStage::kStandardConv), ds,
                                      BenchConfig{}, 1),
               ShapeError);
}

}  // namespace
}  // namespace hbnet
