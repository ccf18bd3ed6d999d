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

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hbnet {

/// Height x width x channels. Data is stored row-major with channels innermost.
struct TensorShape {
  int height = 1;
  int width = 1;
  int channels = 1;

  std::size_t elements() const {
    return static_cast<std::size_t>(height) * width * channels;
  }
  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  bool valid() const { return height >= 1 && width >= 1 && channels >= 1; }

  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

/// Throws ShapeError unless every dimension is at least one.
void validate_shape(const TensorShape& shape);

/// Dense float tensor (HWC).
class FloatTensor {
 public:
  FloatTensor() = default;
  explicit FloatTensor(TensorShape shape, float fill = 0.0f);
  FloatTensor(TensorShape shape, std::vector<float> data);

  const TensorShape& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  const std::vector<float>& values() const { return data_; }

  float& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * shape_.width + x) * shape_.channels + c;
  }

  bool all_finite() const;

  friend bool operator==(const FloatTensor&, const FloatTensor&) = default;

 private:
  TensorShape shape_{};
  std::vector<float> data_;
};

/// Bit-packed {-1,+1} tensor. Bit 1 encodes +1, bit 0 encodes -1.
///
/// Channels are packed innermost into 64-bit words; each pixel owns
/// words_per_pixel() consecutive words and the unused high bits of the last
/// word are always zero.
class BitTensor {
 public:
  static constexpr int kWordBits = 64;
  using Word = std::uint64_t;

  BitTensor() = default;
  /// All elements -1 (all bits zero).
  explicit BitTensor(TensorShape shape);
  /// Adopts packed words; throws ContractError on a length mismatch or a set
  /// padding bit.
  BitTensor(TensorShape shape, std::vector<Word> words);

  const TensorShape& shape() const { return shape_; }
  int words_per_pixel() const { return words_per_pixel_; }
  /// Mask of the valid bits in the last word of every pixel.
  Word last_word_mask() const { return last_word_mask_; }

  std::span<const Word> words() const { return words_; }
  std::span<Word> mutable_words() { return words_; }

  std::span<const Word> pixel(int y, int x) const {
    return std::span<const Word>(words_).subspan(pixel_offset(y, x), words_per_pixel_);
  }
  std::span<Word> pixel(int y, int x) {
    return std::span<Word>(words_).subspan(pixel_offset(y, x), words_per_pixel_);
  }

  bool get(int y, int x, int c) const {
    return (words_[pixel_offset(y, x) + c / kWordBits] >> (c % kWordBits)) & 1u;
  }
  void set(int y, int x, int c, bool positive);

  /// True when every padding bit is zero.
  bool padding_clear() const;

  static int words_for(int channels) { return (channels + kWordBits - 1) / kWordBits; }

  friend bool operator==(const BitTensor& a, const BitTensor& b) {
    return a.shape_ == b.shape_ && a.words_ == b.words_;
  }

 private:
  std::size_t pixel_offset(int y, int x) const {
    return (static_cast<std::size_t>(y) * shape_.width + x) * words_per_pixel_;
  }

  TensorShape shape_{};
  int words_per_pixel_ = 0;
  Word last_word_mask_ = 0;
  std::vector<Word> words_;
};

/// Sign binarization with sign(0) = +1. Throws ContractError on non-finite input.
BitTensor binarize(const FloatTensor& x);

/// Expands bits back to -1.0 / +1.0.
FloatTensor unpack(const BitTensor& b);

/// Mask with the low `bits` bits set (bits in [0, 64]).
constexpr BitTensor::Word low_bits_mask(int bits) {
  return bits >= BitTensor::kWordBits ? ~BitTensor::Word{0}
                                      : ((BitTensor::Word{1} << bits) - 1);
}

/// +-1 dot product of the first n packed elements:
/// 2 * popcount(~(a ^ b) & valid) - n.
/// Throws ContractError when the spans differ in length or n exceeds capacity.
int xnor_dot(std::span<const BitTensor::Word> a, std::span<const BitTensor::Word> b, int n);

}  // namespace hbnet
