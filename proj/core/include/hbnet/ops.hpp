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

#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "hbnet/tensor.hpp"

namespace hbnet {

/// Multiply-accumulate tally filled in by the convolution kernels when an
/// ExecContext carries one. Counts are nominal: every k*k*c_i tap of every
/// output element, padded taps included.
struct MacCounter {
  std::atomic<std::uint64_t> fp32{0};
  std::atomic<std::uint64_t> binary{0};

  void reset() {
    fp32 = 0;
    binary = 0;
  }
};

/// Execution knobs shared by every kernel.
struct ExecContext {
  /// Worker threads; 0 selects the OpenMP default.
  int threads = 0;
  MacCounter* macs = nullptr;

  int resolved_threads() const;
};

struct ConvSpec {
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int in_channels = 1;
  int out_channels = 1;
  bool bias = false;

  /// Output geometry for `in`; throws ShapeError when the window does not fit.
  TensorShape output_shape(const TensorShape& in) const;
};

struct DepthwiseSpec {
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int depth_multiplier = 1;
  bool bias = false;

  TensorShape output_shape(const TensorShape& in) const;
};

struct BatchNormParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float epsilon = 1e-3f;

  static BatchNormParams identity(int channels, float epsilon = 0.0f);
  int channels() const { return static_cast<int>(gamma.size()); }
  /// Throws ContractError on ragged vectors, negative variance or epsilon.
  void validate() const;
};

/// The per-channel scalar batch normalization used by both the unfused and
/// the folded paths.
inline float batchnorm_value(float x, float gamma, float beta, float mean, float var, float eps) {
  return gamma * (x - mean) / std::sqrt(var + eps) + beta;
}

/// sign(batchnorm(x)) folded into one comparison per channel.
///
/// With flip == false the bit is (x >= threshold); with flip == true it is
/// (x <= threshold). A zero-gamma channel becomes a constant: threshold is
/// -inf (always +1) or +inf (always -1) with flip == false.
struct ThresholdFold {
  std::vector<float> threshold;
  std::vector<std::uint8_t> flip;

  int channels() const { return static_cast<int>(threshold.size()); }
  bool positive(int channel, float x) const {
    return flip[channel] ? x <= threshold[channel] : x >= threshold[channel];
  }
};

/// Standard cross-correlation. Weights are a FloatTensor of shape
/// (k, k, c_i * c_o) laid out [ky][kx][ci][co]. `bias` must be empty unless
/// spec.bias, in which case it holds c_o values. Padding is zero-valued.
FloatTensor conv2d(const FloatTensor& x, const FloatTensor& weights, std::span<const float> bias,
                   const ConvSpec& spec, const ExecContext& ctx = {});

/// Per-channel convolution with depth multiplier d. Weights are (k, k, c_i * d)
/// laid out [ky][kx][ci][m]; output channel ci * d + m.
FloatTensor depthwise_conv2d(const FloatTensor& x, const FloatTensor& weights,
                             std::span<const float> bias, const DepthwiseSpec& spec,
                             const ExecContext& ctx = {});

/// Packs float weights (k, k, c_i * c_o) into a binary filter bank: a BitTensor
/// of shape (c_o, k * k, c_i), one row of k*k packed pixels per output channel.
BitTensor pack_filters(const FloatTensor& weights, int kernel, int in_channels, int out_channels);

/// Inverse of pack_filters, producing +-1 float weights (k, k, c_i * c_o).
FloatTensor unpack_filters(const BitTensor& filters, int kernel);

/// XNOR-popcount convolution. Output values are the integer +-1 dot product
/// over the receptive field; zero-padded taps contribute nothing. No bias.
FloatTensor binary_conv2d(const BitTensor& x, const BitTensor& filters, const ConvSpec& spec,
                          const ExecContext& ctx = {});

FloatTensor batchnorm(const FloatTensor& x, const BatchNormParams& p);

/// Thresholds matching sign(batchnorm(x)) bit-for-bit in float arithmetic.
ThresholdFold fold_bn_binarize(const BatchNormParams& p);

/// Applies a ThresholdFold channelwise and packs the result.
BitTensor threshold_binarize(const FloatTensor& x, const ThresholdFold& fold,
                             const ExecContext& ctx = {});

/// Channelwise max over k x k windows with stride s, no padding.
FloatTensor maxpool(const FloatTensor& x, int kernel, int stride, const ExecContext& ctx = {});

/// Output side length for a pooling/conv window: floor((n + 2p - k) / s) + 1.
int window_output(int n, int kernel, int stride, int padding);

}  // namespace hbnet
