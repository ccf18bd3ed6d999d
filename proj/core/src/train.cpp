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

#include "hbnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hbnet/error.hpp"

namespace hbnet {

namespace {

// Double-precision HWC activation used only inside the trainable graph.
struct DT {
  TensorShape s;
  std::vector<double> v;

  DT() = default;
  explicit DT(TensorShape shape) : s(shape), v(shape.elements(), 0.0) {}
  std::size_t idx(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * s.width + x) * s.channels + c;
  }
};

DT from_float(const FloatTensor& t) {
  DT d(t.shape());
  std::copy(t.data().begin(), t.data().end(), d.v.begin());
  return d;
}

// y[oy,ox,o] = bias[o] + sum W[ky,kx,c,o] * x[iy,ix,c]
DT conv_fwd(const DT& x, const double* w, const double* bias, int k, int s, int p, int co) {
  const int ci = x.s.channels;
  DT y({window_output(x.s.height, k, s, p), window_output(x.s.width, k, s, p), co});
  for (int oy = 0; oy < y.s.height; ++oy) {
    for (int ox = 0; ox < y.s.width; ++ox) {
      double* acc = &y.v[y.idx(oy, ox, 0)];
      if (bias) std::copy(bias, bias + co, acc);
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * s - p + ky;
        if (iy < 0 || iy >= x.s.height) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * s - p + kx;
          if (ix < 0 || ix >= x.s.width) continue;
          const double* px = &x.v[x.idx(iy, ix, 0)];
          const double* wk = w + static_cast<std::size_t>(ky * k + kx) * ci * co;
          for (int c = 0; c < ci; ++c) {
            for (int o = 0; o < co; ++o) acc[o] += px[c] * wk[c * co + o];
          }
        }
      }
    }
  }
  return y;
}

void conv_bwd(const DT& x, const double* w, const DT& gy, int k, int s, int p, DT* gx, double* gw,
              double* gb) {
  const int ci = x.s.channels;
  const int co = gy.s.channels;
  for (int oy = 0; oy < gy.s.height; ++oy) {
    for (int ox = 0; ox < gy.s.width; ++ox) {
      const double* g = &gy.v[gy.idx(oy, ox, 0)];
      if (gb) {
        for (int o = 0; o < co; ++o) gb[o] += g[o];
      }
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * s - p + ky;
        if (iy < 0 || iy >= x.s.height) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * s - p + kx;
          if (ix < 0 || ix >= x.s.width) continue;
          const std::size_t xi = x.idx(iy, ix, 0);
          const std::size_t wi = static_cast<std::size_t>(ky * k + kx) * ci * co;
          for (int c = 0; c < ci; ++c) {
            double acc = 0.0;
            for (int o = 0; o < co; ++o) {
              acc += w[wi + c * co + o] * g[o];
              if (gw) gw[wi + c * co + o] += x.v[xi + c] * g[o];
            }
            if (gx) gx->v[xi + c] += acc;
          }
        }
      }
    }
  }
}

// Depthwise: y[.., c*d+m] = bias + sum W[ky,kx,c*d+m] * x[iy,ix,c]
DT dw_fwd(const DT& x, const double* w, const double* bias, int k, int s, int d) {
  const int ci = x.s.channels;
  const int co = ci * d;
  DT y({window_output(x.s.height, k, s, 0), window_output(x.s.width, k, s, 0), co});
  for (int oy = 0; oy < y.s.height; ++oy) {
    for (int ox = 0; ox < y.s.width; ++ox) {
      double* acc = &y.v[y.idx(oy, ox, 0)];
      if (bias) std::copy(bias, bias + co, acc);
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double* px = &x.v[x.idx(oy * s + ky, ox * s + kx, 0)];
          const double* wk = w + static_cast<std::size_t>(ky * k + kx) * co;
          for (int j = 0; j < co; ++j) acc[j] += px[j / d] * wk[j];
        }
      }
    }
  }
  return y;
}

void dw_bwd(const DT& x, const double* w, const DT& gy, int k, int s, int d, DT* gx, double* gw,
            double* gb) {
  const int co = gy.s.channels;
  for (int oy = 0; oy < gy.s.height; ++oy) {
    for (int ox = 0; ox < gy.s.width; ++ox) {
      const double* g = &gy.v[gy.idx(oy, ox, 0)];
      if (gb) {
        for (int j = 0; j < co; ++j) gb[j] += g[j];
      }
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const std::size_t xi = x.idx(oy * s + ky, ox * s + kx, 0);
          const std::size_t wi = static_cast<std::size_t>(ky * k + kx) * co;
          for (int j = 0; j < co; ++j) {
            if (gw) gw[wi + j] += x.v[xi + j / d] * g[j];
            if (gx) gx->v[xi + j / d] += w[wi + j] * g[j];
          }
        }
      }
    }
  }
}

struct BNCache {
  std::vector<DT> xhat;
  std::vector<double> inv_std;
};

// Batchnorm over (batch, pixels) per channel.
std::vector<DT> bn_fwd(const std::vector<DT>& x, const double* gamma, const double* beta,
                       double* run_mean, double* run_var, double eps, bool training,
                       bool update_running, double momentum, BNCache* cache) {
  const int c = x.front().s.channels;
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (training) {
    double count = 0.0;
    for (const DT& t : x) {
      for (std::size_t i = 0; i < t.v.size(); ++i) mean[i % c] += t.v[i];
      count += static_cast<double>(t.s.pixels());
    }
    for (double& m : mean) m /= count;
    for (const DT& t : x) {
      for (std::size_t i = 0; i < t.v.size(); ++i) {
        const double dv = t.v[i] - mean[i % c];
        var[i % c] += dv * dv;
      }
    }
    for (double& v : var) v /= count;
    if (update_running) {
      for (int ch = 0; ch < c; ++ch) {
        run_mean[ch] = momentum * run_mean[ch] + (1.0 - momentum) * mean[ch];
        run_var[ch] = momentum * run_var[ch] + (1.0 - momentum) * var[ch];
      }
    }
  } else {
    std::copy(run_mean, run_mean + c, mean.begin());
    std::copy(run_var, run_var + c, var.begin());
  }
  std::vector<double> inv_std(c);
  for (int ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);
  std::vector<DT> y;
  if (cache) {
    cache->xhat.clear();
    cache->inv_std = inv_std;
  }
  for (const DT& t : x) {
    DT xh(t.s);
    DT out(t.s);
    for (std::size_t i = 0; i < t.v.size(); ++i) {
      const int ch = static_cast<int>(i % c);
      xh.v[i] = (t.v[i] - mean[ch]) * inv_std[ch];
      out.v[i] = gamma[ch] * xh.v[i] + beta[ch];
    }
    if (cache) cache->xhat.push_back(std::move(xh));
    y.push_back(std::move(out));
  }
  return y;
}

std::vector<DT> bn_bwd(const std::vector<DT>& gy, const BNCache& cache, const double* gamma,
                       double* ggamma, double* gbeta) {
  const int c = gy.front().s.channels;
  std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
  double count = 0.0;
  for (std::size_t b = 0; b < gy.size(); ++b) {
    for (std::size_t i = 0; i < gy[b].v.size(); ++i) {
      sum_g[i % c] += gy[b].v[i];
      sum_gx[i % c] += gy[b].v[i] * cache.xhat[b].v[i];
    }
    count += static_cast<double>(gy[b].s.pixels());
  }
  for (int ch = 0; ch < c; ++ch) {
    ggamma[ch] += sum_gx[ch];
    gbeta[ch] += sum_g[ch];
  }
  std::vector<DT> gx;
  for (std::size_t b = 0; b < gy.size(); ++b) {
    DT g(gy[b].s);
    for (std::size_t i = 0; i < g.v.size(); ++i) {
      const int ch = static_cast<int>(i % c);
      g.v[i] = gamma[ch] * cache.inv_std[ch] / count *
               (count * gy[b].v[i] - sum_g[ch] - cache.xhat[b].v[i] * sum_gx[ch]);
    }
    gx.push_back(std::move(g));
  }
  return gx;
}

double binarize_value(double x, Surrogate s) { return s == Surrogate::kSign ? ste_forward(x) : hardtanh(x); }

double binarize_grad(double x, double upstream, Surrogate s, double clip) {
  if (s == Surrogate::kSign) return ste_backward(x, upstream, clip);
  return std::abs(x) < 1.0 ? upstream : 0.0;
}

DT act_fwd(const DT& x, Surrogate s) {
  DT y(x.s);
  for (std::size_t i = 0; i < x.v.size(); ++i) y.v[i] = binarize_value(x.v[i], s);
  return y;
}

DT maxpool_fwd(const DT& x, int k, int s, std::vector<std::size_t>* argmax) {
  DT y({window_output(x.s.height, k, s, 0), window_output(x.s.width, k, s, 0), x.s.channels});
  if (argmax) argmax->assign(y.v.size(), 0);
  for (int oy = 0; oy < y.s.height; ++oy) {
    for (int ox = 0; ox < y.s.width; ++ox) {
      for (int c = 0; c < x.s.channels; ++c) {
        std::size_t best = x.idx(oy * s, ox * s, c);
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const std::size_t i = x.idx(oy * s + ky, ox * s + kx, c);
            if (x.v[i] > x.v[best]) best = i;
          }
        }
        y.v[y.idx(oy, ox, c)] = x.v[best];
        if (argmax) (*argmax)[y.idx(oy, ox, c)] = best;
      }
    }
  }
  return y;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || batch_size < 1 || epochs < 0 || !(ste_clip > 0.0) ||
      !(momentum >= 0.0 && momentum < 1.0) || !(bn_momentum >= 0.0 && bn_momentum <= 1.0)) {
    throw ContractError("train config out of range");
  }
}

void ToyDataset::validate() const {
  if (classes < 2) throw ContractError("toy dataset needs at least two classes");
  if (images.empty() || images.size() != labels.size()) {
    throw ContractError("toy dataset images and labels differ in count");
  }
  for (int l : labels) {
    if (l < 0 || l >= classes) throw ContractError("toy dataset label out of range");
  }
  for (const FloatTensor& im : images) {
    if (im.shape() != images.front().shape()) throw ShapeError("toy dataset images differ in shape");
    if (!im.all_finite()) throw ContractError("toy dataset image has non-finite values");
  }
}

ToyDataset make_blob_dataset(int samples, int size, std::uint64_t seed) {
  if (samples < 2 || size < 4) throw ContractError("make_blob_dataset: too small");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> noise(0.0f, 0.25f);
  std::uniform_real_distribution<float> pos(0.25f * size, 0.75f * size);
  std::uniform_real_distribution<float> jitter(-0.1f, 0.1f);
  ToyDataset ds;
  ds.classes = 2;
  const float radius = 0.25f * size;
  for (int i = 0; i < samples; ++i) {
    const int label = i % 2;
    FloatTensor im({size, size, 3});
    const float cy = pos(rng);
    const float cx = pos(rng);
    const float r = label == 0 ? 0.9f + jitter(rng) : 0.2f + jitter(rng);
    const float b = label == 0 ? 0.2f + jitter(rng) : 0.9f + jitter(rng);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const float dy = y - cy;
        const float dx = x - cx;
        const bool inside = dy * dy + dx * dx <= radius * radius;
        im.at(y, x, 0) = noise(rng) + (inside ? r : 0.0f);
        im.at(y, x, 1) = noise(rng) + (inside ? 0.3f : 0.0f);
        im.at(y, x, 2) = noise(rng) + (inside ? b : 0.0f);
      }
    }
    ds.images.push_back(std::move(im));
    ds.labels.push_back(label);
  }
  return ds;
}

double ste_forward(double x) { return x >= 0.0 ? 1.0 : -1.0; }

double ste_backward(double x, double upstream, double clip) {
  return std::abs(x) <= clip ? upstream : 0.0;
}

double hardtanh(double x) { return std::clamp(x, -1.0, 1.0); }

TrainableNet::TrainableNet(NetworkSpec spec, int classes, std::uint64_t seed, Surrogate surrogate,
                           double ste_clip, float bn_epsilon)
    : spec_(std::move(spec)),
      shapes_(spec_.layer_shapes()),
      classes_(classes),
      surrogate_(surrogate),
      ste_clip_(ste_clip),
      bn_epsilon_(bn_epsilon) {
  if (classes < 2) throw ContractError("trainable net needs at least two classes");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-0.9, 0.9);
  auto add = [&](std::string name, std::size_t n, bool trainable, bool binary, double fill,
                 bool random) {
    Param p;
    p.name = std::move(name);
    p.value.assign(n, fill);
    if (random) {
      for (double& v : p.value) v = uniform(rng);
    }
    p.grad.assign(n, 0.0);
    p.velocity.assign(n, 0.0);
    p.trainable = trainable;
    p.binary = binary;
    params_.push_back(std::move(p));
  };
  auto add_bn = [&](const std::string& base, int c) {
    add(base + ".bn.gamma", c, true, false, 1.0, false);
    add(base + ".bn.beta", c, true, false, 0.0, false);
    add(base + ".bn.running_mean", c, false, false, 0.0, false);
    add(base + ".bn.running_var", c, false, false, 1.0, false);
  };
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    first_param_.push_back(static_cast<int>(params_.size()));
    const LayerDesc& l = spec_.layers[i];
    const int ci = i == 0 ? spec_.input.channels : shapes_[i - 1].channels;
    const std::string base = layer_name(spec_, static_cast<int>(i));
    const std::size_t kk = static_cast<std::size_t>(l.kernel) * l.kernel;
    switch (l.kind) {
      case LayerKind::kStandardConv:
        add(base + ".weight", kk * ci * l.out_channels, true, false, 0.0, true);
        break;
      case LayerKind::kHBDS: {
        const int dc = ci * l.depth_multiplier;
        add(base + ".depthwise", kk * dc, true, false, 0.0, true);
        add(base + ".bias", dc, true, false, 0.0, false);
        add_bn(base, dc);
        add(base + ".pointwise", static_cast<std::size_t>(dc) * l.out_channels, true, true, 0.0,
            true);
        break;
      }
      case LayerKind::kMaxPool:
        break;
      case LayerKind::kBinaryConv:
        add_bn(base, ci);
        add(base + ".weight", kk * ci * l.out_channels, true, true, 0.0, true);
        break;
    }
  }
  head_param_ = static_cast<int>(params_.size());
  const std::size_t features = shapes_[spec_.tap].elements();
  const double scale = 1.0 / std::sqrt(static_cast<double>(features));
  add("head.weight", features * classes_, true, false, 0.0, true);
  for (double& v : params_[head_param_].value) v *= scale;
  add("head.bias", classes_, true, false, 0.0, false);
}

Param& TrainableNet::param(const std::string& name) {
  for (Param& p : params_) {
    if (p.name == name) return p;
  }
  throw ContractError("no parameter named '" + name + "'");
}

double TrainableNet::loss(std::span<const FloatTensor> inputs, std::span<const int> labels,
                          bool training, bool update_running, double bn_momentum) {
  return run(inputs, labels, training, update_running, bn_momentum, false, nullptr);
}

double TrainableNet::loss_and_gradients(std::span<const FloatTensor> inputs,
                                        std::span<const int> labels) {
  for (Param& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  return run(inputs, labels, true, false, 0.9, true, nullptr);
}

std::vector<std::vector<double>> TrainableNet::logits(std::span<const FloatTensor> inputs) {
  std::vector<std::vector<double>> out;
  run(inputs, {}, false, false, 0.9, false, &out);
  return out;
}

double TrainableNet::run(std::span<const FloatTensor> inputs, std::span<const int> labels,
                         bool training, bool update_running, double bn_momentum, bool backward,
                         std::vector<std::vector<double>>* logits_out) {
  if (inputs.empty()) throw ContractError("trainable net: empty batch");
  const bool with_loss = !labels.empty();
  if (with_loss && labels.size() != inputs.size()) {
    throw ContractError("trainable net: labels and inputs differ in count");
  }
  const std::size_t batch = inputs.size();
  const Surrogate sg = surrogate_;

  struct LayerCache {
    std::vector<DT> x;        // layer input
    std::vector<DT> pre;      // depthwise output (HB-DS) or BN input
    std::vector<DT> normed;   // BN output
    std::vector<DT> act;      // binarized activations
    std::vector<double> wb;   // binarized weights
    BNCache bn;
    std::vector<std::vector<std::size_t>> argmax;
  };
  std::vector<LayerCache> caches(spec_.tap + 1);

  auto binarized = [&](const Param& p) {
    std::vector<double> wb(p.value.size());
    for (std::size_t i = 0; i < wb.size(); ++i) wb[i] = binarize_value(p.value[i], sg);
    return wb;
  };

  std::vector<DT> cur;
  for (const FloatTensor& im : inputs) {
    if (im.shape() != spec_.input) throw ShapeError("trainable net: input shape mismatch");
    cur.push_back(from_float(im));
  }

  for (int li = 0; li <= spec_.tap; ++li) {
    const LayerDesc& l = spec_.layers[li];
    LayerCache& c = caches[li];
    const int p0 = first_param_[li];
    c.x = cur;
    std::vector<DT> next;
    switch (l.kind) {
      case LayerKind::kStandardConv:
        for (const DT& x : cur) {
          next.push_back(conv_fwd(x, params_[p0].value.data(), nullptr, l.kernel, l.stride,
                                  l.padding, l.out_channels));
        }
        break;
      case LayerKind::kHBDS: {
        for (const DT& x : cur) {
          c.pre.push_back(dw_fwd(x, params_[p0].value.data(), params_[p0 + 1].value.data(),
                                 l.kernel, l.stride, l.depth_multiplier));
        }
        c.normed = bn_fwd(c.pre, params_[p0 + 2].value.data(), params_[p0 + 3].value.data(),
                          params_[p0 + 4].value.data(), params_[p0 + 5].value.data(), bn_epsilon_,
                          training, update_running, bn_momentum, &c.bn);
        c.wb = binarized(params_[p0 + 6]);
        for (const DT& n : c.normed) {
          c.act.push_back(act_fwd(n, sg));
          next.push_back(conv_fwd(c.act.back(), c.wb.data(), nullptr, 1, 1, 0, l.out_channels));
        }
        break;
      }
      case LayerKind::kMaxPool:
        c.argmax.resize(batch);
        for (std::size_t b = 0; b < batch; ++b) {
          next.push_back(maxpool_fwd(cur[b], l.kernel, l.stride, &c.argmax[b]));
        }
        break;
      case LayerKind::kBinaryConv: {
        c.normed = bn_fwd(cur, params_[p0].value.data(), params_[p0 + 1].value.data(),
                          params_[p0 + 2].value.data(), params_[p0 + 3].value.data(), bn_epsilon_,
                          training, update_running, bn_momentum, &c.bn);
        c.wb = binarized(params_[p0 + 4]);
        for (const DT& n : c.normed) {
          c.act.push_back(act_fwd(n, sg));
          next.push_back(conv_fwd(c.act.back(), c.wb.data(), nullptr, l.kernel, l.stride,
                                  l.padding, l.out_channels));
        }
        break;
      }
    }
    cur = std::move(next);
  }

  // Linear head + softmax cross-entropy.
  const Param& hw = params_[head_param_];
  const Param& hb = params_[head_param_ + 1];
  const std::size_t features = cur.front().v.size();
  std::vector<std::vector<double>> probs(batch);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> z(classes_);
    for (int k = 0; k < classes_; ++k) {
      double acc = hb.value[k];
      const double* row = hw.value.data() + static_cast<std::size_t>(k) * features;
      for (std::size_t f = 0; f < features; ++f) acc += row[f] * cur[b].v[f];
      z[k] = acc;
    }
    if (logits_out) logits_out->push_back(z);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
      v = std::exp(v - zmax);
      sum += v;
    }
    for (double& v : z) v /= sum;
    if (with_loss) total += -std::log(std::max(z[labels[b]], 1e-300));
    probs[b] = std::move(z);
  }
  const double mean_loss = with_loss ? total / static_cast<double>(batch) : 0.0;
  if (!backward || !with_loss) return mean_loss;

  // Backward.
  Param& ghw = params_[head_param_];
  Param& ghb = params_[head_param_ + 1];
  std::vector<DT> grad(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    grad[b] = DT(cur[b].s);
    for (int k = 0; k < classes_; ++k) {
      const double dz = (probs[b][k] - (k == labels[b] ? 1.0 : 0.0)) / static_cast<double>(batch);
      ghb.grad[k] += dz;
      double* grow = ghw.grad.data() + static_cast<std::size_t>(k) * features;
      const double* row = ghw.value.data() + static_cast<std::size_t>(k) * features;
      for (std::size_t f = 0; f < features; ++f) {
        grow[f] += dz * cur[b].v[f];
        grad[b].v[f] += dz * row[f];
      }
    }
  }

  for (int li = spec_.tap; li >= 0; --li) {
    const LayerDesc& l = spec_.layers[li];
    LayerCache& c = caches[li];
    const int p0 = first_param_[li];
    std::vector<DT> gin;
    for (const DT& x : c.x) gin.emplace_back(x.s);
    auto binary_weight_grad = [&](Param& p, const std::vector<double>& gwb) {
      for (std::size_t i = 0; i < gwb.size(); ++i) {
        p.grad[i] += binarize_grad(p.value[i], gwb[i], sg, ste_clip_);
      }
    };
    auto act_back = [&](std::vector<DT>& g) {
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < g[b].v.size(); ++i) {
          g[b].v[i] = binarize_grad(c.normed[b].v[i], g[b].v[i], sg, ste_clip_);
        }
      }
    };
    switch (l.kind) {
      case LayerKind::kStandardConv:
        for (std::size_t b = 0; b < batch; ++b) {
          conv_bwd(c.x[b], params_[p0].value.data(), grad[b], l.kernel, l.stride, l.padding,
                   &gin[b], params_[p0].grad.data(), nullptr);
        }
        break;
      case LayerKind::kHBDS: {
        std::vector<double> gwb(c.wb.size(), 0.0);
        std::vector<DT> gact;
        for (std::size_t b = 0; b < batch; ++b) {
          gact.emplace_back(c.act[b].s);
          conv_bwd(c.act[b], c.wb.data(), grad[b], 1, 1, 0, &gact[b], gwb.data(), nullptr);
        }
        binary_weight_grad(params_[p0 + 6], gwb);
        act_back(gact);
        std::vector<DT> gpre = bn_bwd(gact, c.bn, params_[p0 + 2].value.data(),
                                      params_[p0 + 2].grad.data(), params_[p0 + 3].grad.data());
        for (std::size_t b = 0; b < batch; ++b) {
          dw_bwd(c.x[b], params_[p0].value.data(), gpre[b], l.kernel, l.stride,
                 l.depth_multiplier, &gin[b], params_[p0].grad.data(),
                 params_[p0 + 1].grad.data());
        }
        break;
      }
      case LayerKind::kMaxPool:
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t i = 0; i < grad[b].v.size(); ++i) {
            gin[b].v[c.argmax[b][i]] += grad[b].v[i];
          }
        }
        break;
      case LayerKind::kBinaryConv: {
        std::vector<double> gwb(c.wb.size(), 0.0);
        std::vector<DT> gact;
        for (std::size_t b = 0; b < batch; ++b) {
          gact.emplace_back(c.act[b].s);
          conv_bwd(c.act[b], c.wb.data(), grad[b], l.kernel, l.stride, l.padding, &gact[b],
                   gwb.data(), nullptr);
        }
        binary_weight_grad(params_[p0 + 4], gwb);
        act_back(gact);
        gin = bn_bwd(gact, c.bn, params_[p0].value.data(), params_[p0].grad.data(),
                     params_[p0 + 1].grad.data());
        break;
      }
    }
    grad = std::move(gin);
  }
  return mean_loss;
}

void TrainableNet::clip_latent_weights() {
  for (Param& p : params_) {
    if (!p.binary) continue;
    for (double& v : p.value) v = std::clamp(v, -ste_clip_, ste_clip_);
  }
}

Network TrainableNet::to_network() const {
  auto to_float = [](const std::vector<double>& v) {
    return std::vector<float>(v.begin(), v.end());
  };
  auto bn_from = [&](int p0) {
    BatchNormParams bn;
    bn.gamma = to_float(params_[p0].value);
    bn.beta = to_float(params_[p0 + 1].value);
    bn.running_mean = to_float(params_[p0 + 2].value);
    bn.running_var = to_float(params_[p0 + 3].value);
    bn.epsilon = bn_epsilon_;
    return bn;
  };
  std::vector<LayerWeights> weights;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerDesc& l = spec_.layers[i];
    const int ci = i == 0 ? spec_.input.channels : shapes_[i - 1].channels;
    const int p0 = first_param_[i];
    const int k = l.kernel;
    switch (l.kind) {
      case LayerKind::kStandardConv:
        weights.emplace_back(StandardConvWeights{
            FloatTensor({k, k, ci * l.out_channels}, to_float(params_[p0].value))});
        break;
      case LayerKind::kHBDS: {
        const int dc = ci * l.depth_multiplier;
        HBDSWeights w;
        w.depthwise = FloatTensor({k, k, dc}, to_float(params_[p0].value));
        w.bias = to_float(params_[p0 + 1].value);
        w.bn = bn_from(p0 + 2);
        w.pointwise = pack_filters(
            FloatTensor({1, 1, dc * l.out_channels}, to_float(params_[p0 + 6].value)), 1, dc,
            l.out_channels);
        weights.emplace_back(std::move(w));
        break;
      }
      case LayerKind::kMaxPool:
        weights.emplace_back(PoolWeights{});
        break;
      case LayerKind::kBinaryConv: {
        BinaryConvWeights w;
        w.bn = bn_from(p0);
        w.filters = pack_filters(
            FloatTensor({k, k, ci * l.out_channels}, to_float(params_[p0 + 4].value)), k, ci,
            l.out_channels);
        weights.emplace_back(std::move(w));
        break;
      }
    }
  }
  return Network(spec_, std::move(weights));
}

std::vector<double> TrainableNet::head_logits(std::span<const float> features) const {
  const Param& hw = params_[head_param_];
  const Param& hb = params_[head_param_ + 1];
  const std::size_t n = features.size();
  if (n * classes_ != hw.value.size()) throw ShapeError("head: feature length mismatch");
  std::vector<double> z(classes_);
  for (int k = 0; k < classes_; ++k) {
    double acc = hb.value[k];
    for (std::size_t f = 0; f < n; ++f) acc += hw.value[k * n + f] * features[f];
    z[k] = acc;
  }
  return z;
}

double network_accuracy(const Network& net, const TrainableNet& model, const ToyDataset& data) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const ForwardResult out = net.forward(data.images[i]);
    const std::vector<double> z = model.head_logits(out.features.data());
    const auto best = std::max_element(z.begin(), z.end()) - z.begin();
    hits += best == data.labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(data.images.size());
}

TrainResult train_toy(const NetworkSpec& spec, const ToyDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (data.images.front().shape() != spec.input) {
    throw ShapeError("train_toy: dataset images do not match the network input");
  }
  TrainableNet model(spec, data.classes, cfg.seed, Surrogate::kSign, cfg.ste_clip, cfg.bn_epsilon);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(data.images.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<FloatTensor> xs;
      std::vector<int> ys;
      for (std::size_t i = start; i < end; ++i) {
        xs.push_back(data.images[order[i]]);
        ys.push_back(data.labels[order[i]]);
      }
      // Running statistics are folded in on the same pass that computes gradients.
      model.loss(xs, ys, true, true, cfg.bn_momentum);
      const double l = model.loss_and_gradients(xs, ys);
      if (!std::isfinite(l)) {
        throw DivergenceError("train_toy: loss became non-finite at epoch " +
                              std::to_string(epoch));
      }
      for (Param& p : model.params()) {
        if (!p.trainable) continue;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
          if (cfg.optimizer == Optimizer::kMomentum) {
            p.velocity[i] = cfg.momentum * p.velocity[i] - cfg.learning_rate * p.grad[i];
            p.value[i] += p.velocity[i];
          } else {
            p.value[i] -= cfg.learning_rate * p.grad[i];
          }
        }
      }
      model.clip_latent_weights();
      for (const Param& p : model.params()) {
        if (!std::all_of(p.value.begin(), p.value.end(), [](double v) { return std::isfinite(v); })) {
          throw DivergenceError("train_toy: parameter '" + p.name +
                                "' became non-finite at epoch " + std::to_string(epoch));
        }
      }
      sum += l;
      ++batches;
    }
    history.push_back(sum / batches);
  }
  Network net = model.to_network();
  const double acc = network_accuracy(net, model, data);
  return TrainResult{std::move(net), std::move(model), std::move(history), acc};
}

GradCheckResult gradient_check(TrainableNet& net, std::span<const FloatTensor> inputs,
                               std::span<const int> labels, const GradCheckOptions& opt) {
  net.loss_and_gradients(inputs, labels);
  std::mt19937_64 rng(opt.seed);
  GradCheckResult result;
  for (Param& p : net.params()) {
    GradCheckEntry entry{p.name, 0.0, 0.0, 0.0};
    std::vector<std::size_t> picks(p.value.size());
    std::iota(picks.begin(), picks.end(), 0);
    std::shuffle(picks.begin(), picks.end(), rng);
    picks.resize(std::min<std::size_t>(picks.size(), opt.samples_per_param));
    for (std::size_t i : picks) {
      const double saved = p.value[i];
      p.value[i] = saved + opt.step;
      const double up = net.loss(inputs, labels, true);
      p.value[i] = saved - opt.step;
      const double down = net.loss(inputs, labels, true);
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double analytic = p.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.floor});
      entry.max_relative_error = std::max(entry.max_relative_error, std::abs(analytic - numeric) / denom);
      entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(analytic));
      entry.max_abs_numeric = std::max(entry.max_abs_numeric, std::abs(numeric));
    }
    result.max_relative_error = std::max(result.max_relative_error, entry.max_relative_error);
    result.entries.push_back(std::move(entry));
  }
  return result;
}

}  // namespace hbnet
