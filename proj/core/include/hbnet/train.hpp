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
#include <span>
#include <string>
#include <vector>

#include "hbnet/hbds.hpp"

namespace hbnet {

enum class Optimizer { kSgd, kMomentum };

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 16;
  int epochs = 50;
  std::uint64_t seed = 1;
  Optimizer optimizer = Optimizer::kMomentum;
  double momentum = 0.9;
  /// Straight-through estimator passes gradients where |x| <= ste_clip.
  double ste_clip = 1.0;
  /// Running-statistics momentum: running = m * running + (1 - m) * batch.
  double bn_momentum = 0.9;
  float bn_epsilon = 1e-3f;

  void validate() const;
};

struct ToyDataset {
  std::vector<FloatTensor> images;
  std::vector<int> labels;
  int classes = 2;

  void validate() const;
};

/// Two linearly separable classes: a reddish or bluish disc at a random
/// position on a dim noisy background. Half the samples per class.
ToyDataset make_blob_dataset(int samples, int size, std::uint64_t seed);

/// sign(x) with sign(0) = +1.
double ste_forward(double x);
/// Clipped identity: upstream where |x| <= clip, else 0.
double ste_backward(double x, double upstream, double clip = 1.0);
double hardtanh(double x);

/// How binarization is modeled in the trainable graph.
enum class Surrogate {
  kSign,      // sign forward, straight-through backward (training)
  kHardtanh,  // hardtanh forward and backward (fully differentiable, for checks)
};

/// A named parameter tensor of the trainable graph.
struct Param {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> velocity;
  /// Running statistics are not trainable; their gradient stays zero.
  bool trainable = true;
  /// Latent weights that the forward pass binarizes.
  bool binary = false;
};

/// Double-precision differentiable mirror of a NetworkSpec with a
/// full-precision linear classifier head on the tap features.
class TrainableNet {
 public:
  TrainableNet(NetworkSpec spec, int classes, std::uint64_t seed,
               Surrogate surrogate = Surrogate::kSign, double ste_clip = 1.0,
               float bn_epsilon = 1e-3f);

  const NetworkSpec& spec() const { return spec_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  Param& param(const std::string& name);

  /// Mean softmax cross-entropy over the batch. In training mode batchnorm
  /// uses batch statistics; `update_running` folds them into running stats.
  double loss(std::span<const FloatTensor> inputs, std::span<const int> labels, bool training,
              bool update_running = false, double bn_momentum = 0.9);

  /// loss() followed by backpropagation into every trainable Param::grad.
  double loss_and_gradients(std::span<const FloatTensor> inputs, std::span<const int> labels);

  /// Class scores in evaluation mode (running statistics).
  std::vector<std::vector<double>> logits(std::span<const FloatTensor> inputs);

  /// Clamps latent binary weights to [-clip, clip].
  void clip_latent_weights();

  /// Inference network: latent weights binarized, batchnorm from running stats.
  Network to_network() const;

  /// Logits from tap features using the head (for evaluating a converted network).
  std::vector<double> head_logits(std::span<const float> features) const;

 private:
  double run(std::span<const FloatTensor> inputs, std::span<const int> labels, bool training,
             bool update_running, double bn_momentum, bool backward,
             std::vector<std::vector<double>>* logits_out);

  NetworkSpec spec_;
  std::vector<TensorShape> shapes_;
  int classes_;
  Surrogate surrogate_;
  double ste_clip_;
  float bn_epsilon_;
  std::vector<Param> params_;
  // Index of each layer's first parameter in params_ (layout fixed per kind).
  std::vector<int> first_param_;
  int head_param_ = 0;
};

struct TrainResult {
  Network network;
  TrainableNet model;
  std::vector<double> epoch_loss;
  /// Accuracy of the exported Network (binarized, folded thresholds) + head.
  double train_accuracy = 0.0;
};

/// Minibatch training with the straight-through estimator. Deterministic per
/// cfg.seed. Throws DivergenceError on a non-finite loss.
TrainResult train_toy(const NetworkSpec& spec, const ToyDataset& data, const TrainConfig& cfg);

/// Fraction of samples whose argmax head output over the Network's features
/// matches the label.
double network_accuracy(const Network& net, const TrainableNet& model, const ToyDataset& data);

struct GradCheckOptions {
  int samples_per_param = 16;
  double step = 1e-5;
  std::uint64_t seed = 7;
  /// Relative error denominator floor: |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
};

struct GradCheckEntry {
  std::string param;
  double max_relative_error = 0.0;
  double max_abs_analytic = 0.0;
  double max_abs_numeric = 0.0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::vector<GradCheckEntry> entries;
};

/// Compares backpropagated gradients with central differences of the
/// training-mode loss over sampled entries of every parameter.
GradCheckResult gradient_check(TrainableNet& net, std::span<const FloatTensor> inputs,
                               std::span<const int> labels, const GradCheckOptions& opt = {});

}  // namespace hbnet
