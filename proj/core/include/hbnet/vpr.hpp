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
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hbnet/descriptor.hpp"
#include "hbnet/error.hpp"

namespace hbnet {

/// Correct reference indices for every query.
class GroundTruth {
 public:
  GroundTruth() = default;
  /// Throws ContractError if any index is outside [0, reference_count).
  GroundTruth(std::vector<std::set<int>> correct, int reference_count);

  /// Query i is aligned with reference alignment[i] (identity when empty);
  /// correct references are those within +-tolerance frames of it.
  static GroundTruth from_tolerance(int query_count, int reference_count, int tolerance,
                                    std::span<const int> alignment = {});

  int query_count() const { return static_cast<int>(correct_.size()); }
  int reference_count() const { return reference_count_; }
  const std::set<int>& correct(int query) const { return correct_.at(query); }
  bool is_correct(int query, int reference) const { return correct_.at(query).contains(reference); }

 private:
  std::vector<std::set<int>> correct_;
  int reference_count_ = 0;
};

struct MatchResult {
  int query = 0;
  int reference = 0;
  double score = 0.0;
  bool correct = false;
};

struct PRPoint {
  double precision = 0.0;
  double recall = 0.0;
  double threshold = 0.0;
};

/// Points ordered by decreasing threshold (increasing recall).
struct PRCurve {
  std::vector<PRPoint> points;
};

struct MetricsReport {
  double ep = 0.0;
  double auc = 0.0;
  double tp_percent = 0.0;
  double p_r0 = 0.0;
  double r_p100 = 0.0;
  PRCurve curve;
};

/// Dot product of unit-norm descriptors. Throws ContractError on a dim mismatch.
double cosine(const Descriptor& a, const Descriptor& b);

/// Best reference per query by cosine similarity; ties go to the lowest
/// reference index. Throws ContractError on an empty reference set.
std::vector<MatchResult> match_all(std::span<const Descriptor> queries,
                                   std::span<const Descriptor> references,
                                   const GroundTruth& truth, int threads = 0);

/// Threshold sweep over the distinct best-match scores, highest first.
PRCurve pr_curve(std::span<const MatchResult> results);

/// (P_R0 + R_P100) / 2. P_R0 is the precision of the highest-threshold point;
/// R_P100 the largest recall at precision 1, or 0 if none.
double extended_precision(const PRCurve& curve);
double precision_at_min_recall(const PRCurve& curve);
double recall_at_full_precision(const PRCurve& curve);

/// Trapezoidal area under precision(recall), extended flat to recall 0.
double auc(const PRCurve& curve);

/// 100 * correct best matches / queries.
double tp_percent(std::span<const MatchResult> results);

MetricsReport evaluate(std::span<const MatchResult> results);

/// A reference/query split with ground truth, generic over the item type
/// (image tensors, descriptors, file paths).
template <class Item>
struct PlaceDataset {
  std::string name;
  std::vector<std::string> reference_ids;
  std::vector<Item> references;
  std::vector<std::string> query_ids;
  std::vector<Item> queries;
  GroundTruth truth;
};

/// Records where a combined query came from.
struct QueryOrigin {
  int dataset = 0;
  int query = 0;
};

template <class Item>
struct CombinedDataset {
  PlaceDataset<Item> data;
  std::vector<QueryOrigin> origins;
  std::vector<int> reference_offsets;  // first combined reference index per dataset
};

/// Union of the reference sets (ids namespaced "name/id") with
/// samples_per_dataset queries drawn per dataset, seeded. Ground truth is
/// shifted into the combined reference index space.
template <class Item>
CombinedDataset<Item> combine(std::span<const PlaceDataset<Item>> datasets,
                              int samples_per_dataset, std::uint64_t seed) {
  if (datasets.size() < 2) throw ContractError("combine needs at least two datasets");
  if (samples_per_dataset < 0) throw ContractError("combine: negative sample count");
  CombinedDataset<Item> out;
  out.data.name = "combined";
  std::mt19937_64 rng(seed);
  std::vector<std::set<int>> truth;
  int offset = 0;
  for (std::size_t di = 0; di < datasets.size(); ++di) {
    const PlaceDataset<Item>& ds = datasets[di];
    if (static_cast<std::size_t>(samples_per_dataset) > ds.queries.size()) {
      throw ContractError("combine: dataset '" + ds.name + "' has only " +
                          std::to_string(ds.queries.size()) + " queries");
    }
    out.reference_offsets.push_back(offset);
    for (std::size_t r = 0; r < ds.references.size(); ++r) {
      out.data.reference_ids.push_back(ds.name + "/" + ds.reference_ids[r]);
      out.data.references.push_back(ds.references[r]);
    }
    std::vector<int> picked(ds.queries.size());
    for (std::size_t q = 0; q < picked.size(); ++q) picked[q] = static_cast<int>(q);
    // Partial Fisher-Yates so the draw depends only on the seed and sizes.
    for (int s = 0; s < samples_per_dataset; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, picked.size() - 1);
      std::swap(picked[s], picked[pick(rng)]);
    }
    for (int s = 0; s < samples_per_dataset; ++s) {
      const int q = picked[s];
      out.data.query_ids.push_back(ds.name + "/" + ds.query_ids[q]);
      out.data.queries.push_back(ds.queries[q]);
      out.origins.push_back({static_cast<int>(di), q});
      std::set<int> shifted;
      for (int r : ds.truth.correct(q)) shifted.insert(r + offset);
      truth.push_back(std::move(shifted));
    }
    offset += static_cast<int>(ds.references.size());
  }
  out.data.truth = GroundTruth(std::move(truth), offset);
  return out;
}

}  // namespace hbnet
