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

#include "hbnet/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "hbnet/error.hpp"

namespace hbnet {

void validate_shape(const TensorShape& shape) {
  if (!shape.valid()) {
    throw ShapeError("tensor dimensions must be >= 1, got " + std::to_string(shape.height) +
                     "x" + std::to_string(shape.width) + "x" + std::to_string(shape.channels));
  }
}

FloatTensor::FloatTensor(TensorShape shape, float fill) : shape_(shape) {
  validate_shape(shape);
  data_.assign(shape.elements(), fill);
}

FloatTensor::FloatTensor(TensorShape shape, std::vector<float> data)
    : shape_(shape), data_(std::move(data)) {
  validate_shape(shape);
  if (data_.size() != shape.elements()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape element count " + std::to_string(shape.elements()));
  }
}

bool FloatTensor::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

BitTensor::BitTensor(TensorShape shape)
    : shape_(shape),
      words_per_pixel_(words_for(shape.channels)),
      last_word_mask_(low_bits_mask(shape.channels - (words_for(shape.channels) - 1) * kWordBits)) {
  validate_shape(shape);
  words_.assign(shape.pixels() * words_per_pixel_, 0);
}

BitTensor::BitTensor(TensorShape shape, std::vector<Word> words) : BitTensor(shape) {
  if (words.size() != words_.size()) {
    throw ContractError("bit tensor expects " + std::to_string(words_.size()) + " words, got " +
                        std::to_string(words.size()));
  }
  words_ = std::move(words);
  if (!padding_clear()) {
    throw ContractError("bit tensor padding bits must be zero");
  }
}

void BitTensor::set(int y, int x, int c, bool positive) {
  Word& w = words_[pixel_offset(y, x) + c / kWordBits];
  const Word bit = Word{1} << (c % kWordBits);
  w = positive ? (w | bit) : (w & ~bit);
}

bool BitTensor::padding_clear() const {
  const Word pad = ~last_word_mask_;
  for (std::size_t p = 0; p < shape_.pixels(); ++p) {
    if (words_[(p + 1) * words_per_pixel_ - 1] & pad) return false;
  }
  return true;
}

BitTensor binarize(const FloatTensor& x) {
  if (!x.all_finite()) throw ContractError("binarize: input contains non-finite values");
  BitTensor out(x.shape());
  const int c = x.channels();
  const int wpp = out.words_per_pixel();
  auto src = x.data();
  auto dst = out.mutable_words();
  for (std::size_t p = 0; p < x.shape().pixels(); ++p) {
    const float* row = src.data() + p * c;
    BitTensor::Word* words = dst.data() + p * wpp;
    for (int w = 0; w < wpp; ++w) {
      const int base = w * BitTensor::kWordBits;
      const int n = std::min(BitTensor::kWordBits, c - base);
      BitTensor::Word word = 0;
      for (int j = 0; j < n; ++j) {
        word |= static_cast<BitTensor::Word>(row[base + j] >= 0.0f) << j;
      }
      words[w] = word;
    }
  }
  return out;
}

FloatTensor unpack(const BitTensor& b) {
  FloatTensor out(b.shape());
  const int c = b.shape().channels;
  const int wpp = b.words_per_pixel();
  auto src = b.words();
  auto dst = out.data();
  for (std::size_t p = 0; p < b.shape().pixels(); ++p) {
    for (int ch = 0; ch < c; ++ch) {
      const bool bit = (src[p * wpp + ch / BitTensor::kWordBits] >> (ch % BitTensor::kWordBits)) & 1u;
      dst[p * c + ch] = bit ? 1.0f : -1.0f;
    }
  }
  return out;
}

int xnor_dot(std::span<const BitTensor::Word> a, std::span<const BitTensor::Word> b, int n) {
  if (a.size() != b.size()) {
    throw ContractError("xnor_dot: operand word counts differ (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
  }
  if (n < 0 || static_cast<std::size_t>(n) > a.size() * BitTensor::kWordBits) {
    throw ContractError("xnor_dot: effective length " + std::to_string(n) +
                        " exceeds packed capacity");
  }
  int agree = 0;
  const std::size_t full = static_cast<std::size_t>(n) / BitTensor::kWordBits;
  for (std::size_t i = 0; i < full; ++i) agree += std::popcount(~(a[i] ^ b[i]));
  const int rest = n % BitTensor::kWordBits;
  if (rest != 0) agree += std::popcount(~(a[full] ^ b[full]) & low_bits_mask(rest));
  return 2 * agree - n;
}

}  // namespace hbnet
