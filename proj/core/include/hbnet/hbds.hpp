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

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hbnet/descriptor.hpp"
#include "hbnet/ops.hpp"
#include "hbnet/tensor.hpp"

namespace hbnet {

/// Half-binary depthwise separable module geometry.
struct HBDSSpec {
  int kernel = 11;
  int stride = 4;
  int out_channels = 96;
  int depth_multiplier = 1;
};

/// Weights of one half-binary depthwise separable module: a full-precision
/// depthwise conv with bias, batchnorm, sign, then a 1x1 binary pointwise conv.
struct HBDSWeights {
  FloatTensor depthwise;       // (k, k, c_i * d)
  std::vector<float> bias;     // c_i * d
  BatchNormParams bn;          // c_i * d channels
  BitTensor pointwise;         // filter bank (c_o, 1, c_i * d)
};

/// Folds the module's batchnorm into thresholds once, for inference.
struct HBDSModule {
  HBDSSpec spec;
  HBDSWeights weights;
  ThresholdFold fold;

  HBDSModule(HBDSSpec spec, HBDSWeights weights);
};

/// Runs one HB-DS module on a float input through the folded threshold path.
FloatTensor hbds_forward(const FloatTensor& x, const HBDSModule& module,
                         const ExecContext& ctx = {});

enum class LayerKind { kStandardConv, kHBDS, kMaxPool, kBinaryConv };

const char* to_string(LayerKind kind);
/// Parses "conv" / "hbds" / "maxpool" / "binary_conv"; throws FormatError.
LayerKind layer_kind_from_string(const std::string& s);

/// One layer of a network description. Unused fields are ignored per kind:
/// kMaxPool uses kernel/stride; kHBDS uses kernel/stride/out_channels/depth_multiplier.
/// A kBinaryConv layer is always preceded by batchnorm + sign of its input.
struct LayerDesc {
  LayerKind kind = LayerKind::kMaxPool;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int out_channels = 0;
  int depth_multiplier = 1;

  static LayerDesc standard_conv(int k, int s, int c_o, int pad = 0);
  static LayerDesc hbds(int k, int s, int c_o, int d);
  static LayerDesc max_pool(int k, int s);
  static LayerDesc binary_conv(int k, int s, int pad, int c_o);

  friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

enum class FirstStage { kStandardConv, kHBDS };

struct NetworkSpec {
  TensorShape input{227, 227, 3};
  std::vector<LayerDesc> layers;
  /// Index of the layer whose output is the feature map.
  int tap = -1;

  /// 227x227x3 -> first stage (11,4,96) -> pool 3/2 -> binary 5x5 p2 256 ->
  /// pool 3/2 -> binary 3x3 p1 384 -> pool 3/2, tapped at the last pool.
  static NetworkSpec default_spec(FirstStage first, int depth_multiplier = 12);

  /// Output shape of every layer. Throws ShapeError on an inconsistent spec.
  std::vector<TensorShape> layer_shapes() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Short layer name ("conv1", "hbds1", "pool2", "bconv3"), numbered by position.
std::string layer_name(const NetworkSpec& spec, int index);

struct StandardConvWeights {
  FloatTensor weights;  // (k, k, c_i * c_o), no bias
};

struct BinaryConvWeights {
  BatchNormParams bn;   // over the layer input channels
  BitTensor filters;    // (c_o, k * k, c_i)
};

struct PoolWeights {};

using LayerWeights = std::variant<PoolWeights, StandardConvWeights, HBDSWeights, BinaryConvWeights>;

struct LayerTiming {
  std::string name;
  std::chrono::nanoseconds duration{0};
};

struct ForwardResult {
  FloatTensor features;
  std::vector<LayerTiming> timings;
};

/// Immutable runnable network with batchnorm folded into thresholds.
class Network {
 public:
  /// Validates the weights against the spec; throws ShapeError on mismatch.
  Network(NetworkSpec spec, std::vector<LayerWeights> weights);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<LayerWeights>& weights() const { return weights_; }
  const std::vector<TensorShape>& shapes() const { return shapes_; }

  /// Features at the tap layer. Layers past the tap are not executed.
  ForwardResult forward(const FloatTensor& x, bool timing = false,
                        const ExecContext& ctx = {}) const;

 private:
  FloatTensor run_layer(int index, const FloatTensor& x, const ExecContext& ctx) const;

  NetworkSpec spec_;
  std::vector<LayerWeights> weights_;
  std::vector<TensorShape> shapes_;
  std::vector<ThresholdFold> folds_;  // per layer; empty for layers without batchnorm
};

/// Deterministic seeded weights: uniform in [-1, 1] (binarized for binary
/// layers), zero bias, identity batchnorm.
std::vector<LayerWeights> random_weights(const NetworkSpec& spec, std::uint64_t seed);

Network build_network(NetworkSpec spec, std::vector<LayerWeights> weights);
Network build_random_network(NetworkSpec spec, std::uint64_t seed);

/// Re-estimates every batchnorm's running mean/variance from sample inputs,
/// layer by layer. Useful for untrained networks whose identity batchnorm
/// would leave post-pooling activations almost all positive.
Network calibrate_batchnorm(const Network& net, std::span<const FloatTensor> samples,
                            const ExecContext& ctx = {});

/// Flattens features and divides by their L2 norm. Throws ZeroNormError.
Descriptor extract_descriptor(const FloatTensor& features, std::string id = {});

}  // namespace hbnet
