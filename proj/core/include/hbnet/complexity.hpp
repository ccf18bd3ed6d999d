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
#include <string>
#include <vector>

#include "hbnet/hbds.hpp"

namespace hbnet {

using Count = std::uint64_t;

/// Non-negative fraction kept unreduced; equality compares reduced forms.
struct Fraction {
  Count num = 0;
  Count den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  Fraction reduced() const;
  friend bool operator==(const Fraction& a, const Fraction& b) {
    const Fraction x = a.reduced();
    const Fraction y = b.reduced();
    return x.num == y.num && x.den == y.den;
  }
  friend Fraction operator+(const Fraction& a, const Fraction& b);
};

/// Standard convolution MACs: k^2 * c_i * h_o * w_o * c_o.
Count c_conv(Count k, Count c_i, Count h_o, Count w_o, Count c_o);
/// Depthwise MACs with depth multiplier d: d * k^2 * c_i * h_o * w_o.
Count c_depth(Count k, Count c_i, Count h_o, Count w_o, Count d = 1);
/// Pointwise (1x1) MACs: c_i_eff * h_o * w_o * c_o, with c_i_eff = d * c_i.
Count c_point(Count c_i_eff, Count h_o, Count w_o, Count c_o);
/// Separable MACs: depthwise plus pointwise.
Count c_sep(Count k, Count c_i, Count h_o, Count w_o, Count c_o, Count d = 1);

/// Standard-over-separable cost ratio k^2 c_o / (d (c_o + k^2)).
Fraction speedup_fraction(Count k, Count c_o, Count d = 1);
double speedup_ratio(Count k, Count c_o, Count d = 1);
/// Binary share of separable MACs, c_o / (k^2 + c_o).
Fraction binary_share_fraction(Count k, Count c_o);
double binary_share(Count k, Count c_o);
/// Full-precision share of separable MACs, k^2 / (k^2 + c_o).
Fraction fp_share_fraction(Count k, Count c_o);
double fp_share(Count k, Count c_o);

struct LayerCost {
  std::string name;
  Count macs_fp32 = 0;
  Count macs_1bit = 0;
  Count params_fp32 = 0;
  Count params_1bit = 0;

  LayerCost& operator+=(const LayerCost& o);
};

struct ComplexityReport {
  std::vector<LayerCost> layers;
  LayerCost total;
  /// Cost of the first stage replaced by a standard conv of the same geometry,
  /// divided by the actual first-stage MACs (1 for a standard first stage).
  double first_stage_speedup = 1.0;
  /// Binary and full-precision shares of the first stage MACs.
  double first_stage_binary_share = 0.0;
  double first_stage_fp_share = 1.0;

  const LayerCost& first_stage() const { return layers.front(); }
};

/// Per-layer accounting. Standard conv: fp32 weights, no bias. HB-DS:
/// depthwise weights + bias + batchnorm gamma/beta as fp32, pointwise as 1 bit;
/// depthwise MACs are fp32 and pointwise MACs 1 bit. Binary conv: 1-bit
/// filters, preceding batchnorm gamma/beta as fp32. Pooling costs nothing.
ComplexityReport network_report(const NetworkSpec& spec);

/// Millions with one decimal, e.g. 105415200 -> "105.4".
std::string format_millions(Count n);

}  // namespace hbnet
