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

#include "hbnet/ops.hpp"

#include <omp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "hbnet/error.hpp"

namespace hbnet {

namespace {

std::string dims(const TensorShape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" +
         std::to_string(s.channels);
}

void count_macs(const ExecContext& ctx, std::uint64_t fp32, std::uint64_t binary) {
  if (ctx.macs == nullptr) return;
  ctx.macs->fp32 += fp32;
  ctx.macs->binary += binary;
}

// Maps a float onto an unsigned key with the same ordering (NaN excluded).
std::uint32_t order_key(float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  return (bits & 0x80000000u) ? ~bits : (bits | 0x80000000u);
}

float from_order_key(std::uint32_t key) {
  const std::uint32_t bits = (key & 0x80000000u) ? (key & 0x7fffffffu) : ~key;
  return std::bit_cast<float>(bits);
}

}  // namespace

int ExecContext::resolved_threads() const {
  return threads > 0 ? threads : omp_get_max_threads();
}

int window_output(int n, int kernel, int stride, int padding) {
  const int span = n + 2 * padding - kernel;
  if (span < 0 || stride < 1) return 0;
  return span / stride + 1;
}

TensorShape ConvSpec::output_shape(const TensorShape& in) const {
  if (kernel < 1 || stride < 1 || padding < 0 || in_channels < 1 || out_channels < 1) {
    throw ShapeError("conv spec fields out of range");
  }
  if (in.channels != in_channels) {
    throw ShapeError("conv expects " + std::to_string(in_channels) + " input channels, got " +
                     dims(in));
  }
  const int h = window_output(in.height, kernel, stride, padding);
  const int w = window_output(in.width, kernel, stride, padding);
  if (h < 1 || w < 1) throw ShapeError("conv window larger than padded input " + dims(in));
  return {h, w, out_channels};
}

TensorShape DepthwiseSpec::output_shape(const TensorShape& in) const {
  if (kernel < 1 || stride < 1 || padding < 0 || depth_multiplier < 1) {
    throw ShapeError("depthwise spec fields out of range");
  }
  const int h = window_output(in.height, kernel, stride, padding);
  const int w = window_output(in.width, kernel, stride, padding);
  if (h < 1 || w < 1) throw ShapeError("depthwise window larger than padded input " + dims(in));
  return {h, w, in.channels * depth_multiplier};
}

BatchNormParams BatchNormParams::identity(int channels, float epsilon) {
  BatchNormParams p;
  p.gamma.assign(channels, 1.0f);
  p.beta.assign(channels, 0.0f);
  p.running_mean.assign(channels, 0.0f);
  p.running_var.assign(channels, 1.0f);
  p.epsilon = epsilon;
  return p;
}

void BatchNormParams::validate() const {
  const std::size_t n = gamma.size();
  if (beta.size() != n || running_mean.size() != n || running_var.size() != n) {
    throw ContractError("batchnorm parameter vectors differ in length");
  }
  if (!(epsilon >= 0.0f)) throw ContractError("batchnorm epsilon must be >= 0");
  for (float v : running_var) {
    if (!(v >= 0.0f)) throw ContractError("batchnorm running variance must be >= 0");
  }
}

FloatTensor conv2d(const FloatTensor& x, const FloatTensor& weights, std::span<const float> bias,
                   const ConvSpec& spec, const ExecContext& ctx) {
  const TensorShape out_shape = spec.output_shape(x.shape());
  const int k = spec.kernel;
  const int ci = spec.in_channels;
  const int co = spec.out_channels;
  if (weights.shape() != TensorShape{k, k, ci * co}) {
    throw ShapeError("conv2d weights must be " + dims({k, k, ci * co}) + ", got " +
                     dims(weights.shape()));
  }
  if (spec.bias ? bias.size() != static_cast<std::size_t>(co) : !bias.empty()) {
    throw ShapeError("conv2d bias length does not match spec");
  }

  FloatTensor out(out_shape);
  const float* src = x.data().data();
  const float* wts = weights.data().data();
  float* dst = out.data().data();
  const int in_h = x.height();
  const int in_w = x.width();
  const int out_h = out_shape.height;
  const int out_w = out_shape.width;

#pragma omp parallel for schedule(static) num_threads(ctx.resolved_threads())
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      float* acc = dst + (static_cast<std::size_t>(oy) * out_w + ox) * co;
      if (spec.bias) std::copy(bias.begin(), bias.end(), acc);
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * spec.stride - spec.padding + ky;
        if (iy < 0 || iy >= in_h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * spec.stride - spec.padding + kx;
          if (ix < 0 || ix >= in_w) continue;
          const float* pix = src + (static_cast<std::size_t>(iy) * in_w + ix) * ci;
          const float* wk = wts + static_cast<std::size_t>(ky * k + kx) * ci * co;
          for (int c = 0; c < ci; ++c) {
            const float v = pix[c];
            const float* wrow = wk + static_cast<std::size_t>(c) * co;
            for (int o = 0; o < co; ++o) acc[o] += v * wrow[o];
          }
        }
      }
    }
  }
  count_macs(ctx, static_cast<std::uint64_t>(k) * k * ci * out_shape.elements(), 0);
  return out;
}

FloatTensor depthwise_conv2d(const FloatTensor& x, const FloatTensor& weights,
                             std::span<const float> bias, const DepthwiseSpec& spec,
                             const ExecContext& ctx) {
  const TensorShape out_shape = spec.output_shape(x.shape());
  const int k = spec.kernel;
  const int ci = x.channels();
  const int d = spec.depth_multiplier;
  const int co = ci * d;
  if (weights.shape() != TensorShape{k, k, co}) {
    throw ShapeError("depthwise weights must be " + dims({k, k, co}) + ", got " +
                     dims(weights.shape()));
  }
  if (spec.bias ? bias.size() != static_cast<std::size_t>(co) : !bias.empty()) {
    throw ShapeError("depthwise bias length does not match spec");
  }

  FloatTensor out(out_shape);
  const int in_h = x.height();
  const int in_w = x.width();
  const int out_h = out_shape.height;
  const int out_w = out_shape.width;

  // Replicate every input channel d times so that channel j of the expanded
  // input feeds output channel j; the tap loop is then one co-wide stream.
  std::vector<float> expanded;
  const float* src = x.data().data();
  if (d > 1) {
    expanded.resize(x.shape().pixels() * co);
    const auto pixels = static_cast<std::int64_t>(x.shape().pixels());
#pragma omp parallel for schedule(static) num_threads(ctx.resolved_threads())
    for (std::int64_t p = 0; p < pixels; ++p) {
      const float* in_px = src + p * ci;
      float* e = expanded.data() + p * co;
      for (int c = 0; c < ci; ++c) std::fill(e + c * d, e + (c + 1) * d, in_px[c]);
    }
    src = expanded.data();
  }
  const float* wts = weights.data().data();
  float* dst = out.data().data();

#pragma omp parallel num_threads(ctx.resolved_threads())
  {
  // For interior windows a kernel row and the matching input row are both
  // k * co contiguous floats, so each row is one elementwise stream into
  // `lanes`, reduced over kx once per output pixel.
  std::vector<float> lanes(static_cast<std::size_t>(k) * co);
  const std::size_t row_len = lanes.size();
#pragma omp for schedule(static)
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      float* acc = dst + (static_cast<std::size_t>(oy) * out_w + ox) * co;
      if (spec.bias) std::copy(bias.begin(), bias.end(), acc);
      const int y0 = oy * spec.stride - spec.padding;
      const int x0 = ox * spec.stride - spec.padding;
      if (y0 >= 0 && x0 >= 0 && y0 + k <= in_h && x0 + k <= in_w) {
        std::fill(lanes.begin(), lanes.end(), 0.0f);
        float* __restrict l = lanes.data();
        for (int ky = 0; ky < k; ++ky) {
          const float* __restrict pix = src + (static_cast<std::size_t>(y0 + ky) * in_w + x0) * co;
          const float* __restrict wk = wts + static_cast<std::size_t>(ky) * row_len;
          for (std::size_t i = 0; i < row_len; ++i) l[i] += pix[i] * wk[i];
        }
        for (int kx = 0; kx < k; ++kx) {
          const float* lk = l + static_cast<std::size_t>(kx) * co;
          for (int j = 0; j < co; ++j) acc[j] += lk[j];
        }
        continue;
      }
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * spec.stride - spec.padding + ky;
        if (iy < 0 || iy >= in_h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * spec.stride - spec.padding + kx;
          if (ix < 0 || ix >= in_w) continue;
          const float* pix = src + (static_cast<std::size_t>(iy) * in_w + ix) * co;
          const float* wk = wts + static_cast<std::size_t>(ky * k + kx) * co;
          for (int j = 0; j < co; ++j) acc[j] += pix[j] * wk[j];
        }
      }
    }
  }
  }
  count_macs(ctx, static_cast<std::uint64_t>(k) * k * out_shape.elements(), 0);
  return out;
}

BitTensor pack_filters(const FloatTensor& weights, int kernel, int in_channels, int out_channels) {
  if (weights.shape() != TensorShape{kernel, kernel, in_channels * out_channels}) {
    throw ShapeError("pack_filters: weights must be " +
                     dims({kernel, kernel, in_channels * out_channels}));
  }
  BitTensor filters({out_channels, kernel * kernel, in_channels});
  for (int o = 0; o < out_channels; ++o) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        for (int c = 0; c < in_channels; ++c) {
          filters.set(o, ky * kernel + kx, c, weights.at(ky, kx, c * out_channels + o) >= 0.0f);
        }
      }
    }
  }
  return filters;
}

FloatTensor unpack_filters(const BitTensor& filters, int kernel) {
  const int co = filters.shape().height;
  const int ci = filters.shape().channels;
  if (filters.shape().width != kernel * kernel) {
    throw ShapeError("unpack_filters: filter bank width is not kernel^2");
  }
  FloatTensor w({kernel, kernel, ci * co});
  for (int o = 0; o < co; ++o) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        for (int c = 0; c < ci; ++c) {
          w.at(ky, kx, c * co + o) = filters.get(o, ky * kernel + kx, c) ? 1.0f : -1.0f;
        }
      }
    }
  }
  return w;
}

FloatTensor binary_conv2d(const BitTensor& x, const BitTensor& filters, const ConvSpec& spec,
                          const ExecContext& ctx) {
  const TensorShape out_shape = spec.output_shape(x.shape());
  const int k = spec.kernel;
  const int ci = spec.in_channels;
  const int co = spec.out_channels;
  if (filters.shape() != TensorShape{co, k * k, ci}) {
    throw ShapeError("binary_conv2d filters must be " + dims({co, k * k, ci}) + ", got " +
                     dims(filters.shape()));
  }
  if (spec.bias) throw ContractError("binary_conv2d does not take a bias");

  using Word = BitTensor::Word;
  FloatTensor out(out_shape);
  const int wpp = x.words_per_pixel();
  const int patch_words = k * k * wpp;
  const Word* src = x.words().data();
  const Word* bank = filters.words().data();
  float* dst = out.data().data();
  const int in_h = x.shape().height;
  const int in_w = x.shape().width;
  const int out_h = out_shape.height;
  const int out_w = out_shape.width;

#pragma omp parallel num_threads(ctx.resolved_threads())
  {
    // Receptive field gathered contiguously; mask is zero for padded taps.
    std::vector<Word> patch(patch_words);
    std::vector<Word> mask(patch_words);
#pragma omp for schedule(static)
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        const int y0 = oy * spec.stride - spec.padding;
        const int x0 = ox * spec.stride - spec.padding;
        float* o_px = dst + (static_cast<std::size_t>(oy) * out_w + ox) * co;
        if (k == 1 && spec.padding == 0) {
          // Pointwise: the receptive field is one packed pixel, used in place.
          const Word* p = src + (static_cast<std::size_t>(y0) * in_w + x0) * wpp;
          if (wpp == 1) {
            const Word word = p[0];
            for (int o = 0; o < co; ++o) {
              o_px[o] = static_cast<float>(ci - 2 * static_cast<int>(std::popcount(word ^ bank[o])));
            }
            continue;
          }
          for (int o = 0; o < co; ++o) {
            const Word* f = bank + static_cast<std::size_t>(o) * wpp;
            int mismatches = 0;
            for (int i = 0; i < wpp; ++i) mismatches += std::popcount(p[i] ^ f[i]);
            o_px[o] = static_cast<float>(ci - 2 * mismatches);
          }
          continue;
        }
        const bool interior = y0 >= 0 && x0 >= 0 && y0 + k <= in_h && x0 + k <= in_w;
        int valid_taps = 0;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = y0 + ky;
          Word* prow = patch.data() + static_cast<std::size_t>(ky) * k * wpp;
          Word* mrow = mask.data() + static_cast<std::size_t>(ky) * k * wpp;
          if (interior) {
            std::memcpy(prow, src + (static_cast<std::size_t>(iy) * in_w + x0) * wpp,
                        sizeof(Word) * k * wpp);
            valid_taps += k;
            continue;
          }
          for (int kx = 0; kx < k; ++kx) {
            const int ix = x0 + kx;
            const bool inside = iy >= 0 && iy < in_h && ix >= 0 && ix < in_w;
            for (int w = 0; w < wpp; ++w) {
              prow[kx * wpp + w] =
                  inside ? src[(static_cast<std::size_t>(iy) * in_w + ix) * wpp + w] : 0;
              mrow[kx * wpp + w] = inside ? ~Word{0} : 0;
            }
            valid_taps += inside;
          }
        }
        const int n = valid_taps * ci;
        const Word* p = patch.data();
        const Word* m = mask.data();
        // Channel padding bits are zero in both operands, so they never mismatch
        // and dot = n - 2 * mismatches equals the masked XNOR form.
        if (interior) {
          for (int o = 0; o < co; ++o) {
            const Word* f = bank + static_cast<std::size_t>(o) * patch_words;
            int mismatches = 0;
            for (int i = 0; i < patch_words; ++i) mismatches += std::popcount(p[i] ^ f[i]);
            o_px[o] = static_cast<float>(n - 2 * mismatches);
          }
        } else {
          for (int o = 0; o < co; ++o) {
            const Word* f = bank + static_cast<std::size_t>(o) * patch_words;
            int mismatches = 0;
            for (int i = 0; i < patch_words; ++i) mismatches += std::popcount((p[i] ^ f[i]) & m[i]);
            o_px[o] = static_cast<float>(n - 2 * mismatches);
          }
        }
      }
    }
  }
  count_macs(ctx, 0, static_cast<std::uint64_t>(k) * k * ci * out_shape.elements());
  return out;
}

FloatTensor batchnorm(const FloatTensor& x, const BatchNormParams& p) {
  p.validate();
  if (p.channels() != x.channels()) {
    throw ShapeError("batchnorm has " + std::to_string(p.channels()) + " channels, input " +
                     dims(x.shape()));
  }
  FloatTensor out(x.shape());
  const int c = x.channels();
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const int ch = static_cast<int>(i % c);
    dst[i] = batchnorm_value(src[i], p.gamma[ch], p.beta[ch], p.running_mean[ch],
                             p.running_var[ch], p.epsilon);
  }
  return out;
}

ThresholdFold fold_bn_binarize(const BatchNormParams& p) {
  p.validate();
  constexpr float kInf = std::numeric_limits<float>::infinity();
  ThresholdFold fold;
  fold.threshold.resize(p.channels());
  fold.flip.resize(p.channels());
  for (int ch = 0; ch < p.channels(); ++ch) {
    const float gamma = p.gamma[ch];
    const float beta = p.beta[ch];
    const float mean = p.running_mean[ch];
    const float var = p.running_var[ch];
    const float eps = p.epsilon;
    if (!(var + eps > 0.0f)) throw ContractError("fold_bn_binarize requires var + eps > 0");
    if (gamma == 0.0f) {
      fold.threshold[ch] = beta >= 0.0f ? -kInf : kInf;
      fold.flip[ch] = 0;
      continue;
    }
    // Rounding keeps the float batchnorm monotone in x, so the sign boundary is
    // a single float. Binary search over ordered float keys finds it exactly:
    // the smallest non-negative-output x (gamma > 0) or the largest (gamma < 0).
    const bool rising = gamma > 0.0f;
    auto positive = [&](float x) { return batchnorm_value(x, gamma, beta, mean, var, eps) >= 0.0f; };
    std::uint32_t lo = order_key(-kInf);
    std::uint32_t hi = order_key(kInf);
    if (rising) {
      if (positive(-kInf)) {
        fold.threshold[ch] = -kInf;
      } else if (!positive(kInf)) {
        fold.threshold[ch] = kInf;
      } else {
        while (hi - lo > 1) {  // invariant: !positive(lo), positive(hi)
          const std::uint32_t mid = lo + (hi - lo) / 2;
          (positive(from_order_key(mid)) ? hi : lo) = mid;
        }
        fold.threshold[ch] = from_order_key(hi);
      }
      fold.flip[ch] = 0;
    } else {
      if (positive(kInf)) {
        fold.threshold[ch] = -kInf;
        fold.flip[ch] = 0;
        continue;
      }
      if (!positive(-kInf)) {
        fold.threshold[ch] = kInf;
        fold.flip[ch] = 0;
        continue;
      }
      while (hi - lo > 1) {  // invariant: positive(lo), !positive(hi)
        const std::uint32_t mid = lo + (hi - lo) / 2;
        (positive(from_order_key(mid)) ? lo : hi) = mid;
      }
      fold.threshold[ch] = from_order_key(lo);
      fold.flip[ch] = 1;
    }
  }
  return fold;
}

BitTensor threshold_binarize(const FloatTensor& x, const ThresholdFold& fold,
                             const ExecContext& ctx) {
  if (fold.channels() != x.channels()) {
    throw ShapeError("threshold fold has " + std::to_string(fold.channels()) +
                     " channels, input " + dims(x.shape()));
  }
  using Word = BitTensor::Word;
  BitTensor out(x.shape());
  const int c = x.channels();
  const int wpp = out.words_per_pixel();
  const float* src = x.data().data();
  Word* dst = out.mutable_words().data();
  const auto pixels = static_cast<std::int64_t>(x.shape().pixels());
#pragma omp parallel for schedule(static) num_threads(ctx.resolved_threads())
  for (std::int64_t p = 0; p < pixels; ++p) {
    const float* row = src + p * c;
    Word* words = dst + p * wpp;
    for (int w = 0; w < wpp; ++w) {
      const int base = w * BitTensor::kWordBits;
      const int n = std::min(BitTensor::kWordBits, c - base);
      Word word = 0;
      for (int j = 0; j < n; ++j) {
        word |= static_cast<Word>(fold.positive(base + j, row[base + j])) << j;
      }
      words[w] = word;
    }
  }
  return out;
}

FloatTensor maxpool(const FloatTensor& x, int kernel, int stride, const ExecContext& ctx) {
  if (kernel < 1 || stride < 1) throw ContractError("maxpool kernel and stride must be >= 1");
  if (x.height() < kernel || x.width() < kernel) {
    throw ShapeError("maxpool window " + std::to_string(kernel) + " larger than input " +
                     dims(x.shape()));
  }
  const int out_h = window_output(x.height(), kernel, stride, 0);
  const int out_w = window_output(x.width(), kernel, stride, 0);
  const int c = x.channels();
  FloatTensor out({out_h, out_w, c});
  const float* src = x.data().data();
  float* dst = out.data().data();
  const int in_w = x.width();
#pragma omp parallel for schedule(static) num_threads(ctx.resolved_threads())
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      float* o = dst + (static_cast<std::size_t>(oy) * out_w + ox) * c;
      std::fill(o, o + c, -std::numeric_limits<float>::infinity());
      for (int ky = 0; ky < kernel; ++ky) {
        for (int kx = 0; kx < kernel; ++kx) {
          const float* pix =
              src + (static_cast<std::size_t>(oy * stride + ky) * in_w + ox * stride + kx) * c;
          for (int ch = 0; ch < c; ++ch) o[ch] = std::max(o[ch], pix[ch]);
        }
      }
    }
  }
  return out;
}

}  // namespace hbnet
