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

#include "hbnet/complexity.hpp"

#include <cstdio>
#include <numeric>

#include "hbnet/error.hpp"

namespace hbnet {

Fraction Fraction::reduced() const {
  const Count g = std::gcd(num, den);
  return g == 0 ? *this : Fraction{num / g, den / g};
}

Fraction operator+(const Fraction& a, const Fraction& b) {
  if (a.den == b.den) return {a.num + b.num, a.den};
  return Fraction{a.num * b.den + b.num * a.den, a.den * b.den}.reduced();
}

Count c_conv(Count k, Count c_i, Count h_o, Count w_o, Count c_o) {
  return k * k * c_i * h_o * w_o * c_o;
}

Count c_depth(Count k, Count c_i, Count h_o, Count w_o, Count d) {
  return d * k * k * c_i * h_o * w_o;
}

Count c_point(Count c_i_eff, Count h_o, Count w_o, Count c_o) { return c_i_eff * h_o * w_o * c_o; }

Count c_sep(Count k, Count c_i, Count h_o, Count w_o, Count c_o, Count d) {
  return c_depth(k, c_i, h_o, w_o, d) + c_point(d * c_i, h_o, w_o, c_o);
}

Fraction speedup_fraction(Count k, Count c_o, Count d) {
  if (k == 0 || c_o == 0 || d == 0) throw ContractError("speedup_ratio: arguments must be >= 1");
  return {k * k * c_o, d * (c_o + k * k)};
}
double speedup_ratio(Count k, Count c_o, Count d) { return speedup_fraction(k, c_o, d).value(); }

Fraction binary_share_fraction(Count k, Count c_o) {
  if (k == 0 || c_o == 0) throw ContractError("binary_share: arguments must be >= 1");
  return {c_o, k * k + c_o};
}
double binary_share(Count k, Count c_o) { return binary_share_fraction(k, c_o).value(); }

Fraction fp_share_fraction(Count k, Count c_o) {
  if (k == 0 || c_o == 0) throw ContractError("fp_share: arguments must be >= 1");
  return {k * k, k * k + c_o};
}
double fp_share(Count k, Count c_o) { return fp_share_fraction(k, c_o).value(); }

LayerCost& LayerCost::operator+=(const LayerCost& o) {
  macs_fp32 += o.macs_fp32;
  macs_1bit += o.macs_1bit;
  params_fp32 += o.params_fp32;
  params_1bit += o.params_1bit;
  return *this;
}

ComplexityReport network_report(const NetworkSpec& spec) {
  const std::vector<TensorShape> shapes = spec.layer_shapes();
  ComplexityReport report;
  report.total.name = "total";
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& l = spec.layers[i];
    const Count ci = i == 0 ? spec.input.channels : shapes[i - 1].channels;
    const Count ho = shapes[i].height;
    const Count wo = shapes[i].width;
    const Count k = l.kernel;
    LayerCost cost;
    cost.name = layer_name(spec, static_cast<int>(i));
    switch (l.kind) {
      case LayerKind::kStandardConv:
        cost.macs_fp32 = c_conv(k, ci, ho, wo, l.out_channels);
        cost.params_fp32 = k * k * ci * l.out_channels;
        break;
      case LayerKind::kHBDS: {
        const Count d = l.depth_multiplier;
        const Count dc = d * ci;
        cost.macs_fp32 = c_depth(k, ci, ho, wo, d);
        cost.macs_1bit = c_point(dc, ho, wo, l.out_channels);
        cost.params_fp32 = k * k * dc + dc + 2 * dc;
        cost.params_1bit = dc * l.out_channels;
        break;
      }
      case LayerKind::kBinaryConv:
        cost.macs_1bit = c_conv(k, ci, ho, wo, l.out_channels);
        cost.params_1bit = k * k * ci * l.out_channels;
        cost.params_fp32 = 2 * ci;
        break;
      case LayerKind::kMaxPool:
        break;
    }
    report.total += cost;
    report.layers.push_back(std::move(cost));
  }

  const LayerDesc& first = spec.layers.front();
  const LayerCost& fc = report.layers.front();
  if (first.kind == LayerKind::kHBDS) {
    const Count standard = c_conv(first.kernel, spec.input.channels, shapes[0].height,
                                  shapes[0].width, first.out_channels);
    const Count sep = fc.macs_fp32 + fc.macs_1bit;
    report.first_stage_speedup = static_cast<double>(standard) / static_cast<double>(sep);
    report.first_stage_binary_share = static_cast<double>(fc.macs_1bit) / static_cast<double>(sep);
    report.first_stage_fp_share = static_cast<double>(fc.macs_fp32) / static_cast<double>(sep);
  }
  return report;
}

std::string format_millions(Count n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", static_cast<double>(n) / 1e6);
  return buf;
}

}  // namespace hbnet
