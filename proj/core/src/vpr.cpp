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

#include "hbnet/vpr.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

namespace hbnet {

GroundTruth::GroundTruth(std::vector<std::set<int>> correct, int reference_count)
    : correct_(std::move(correct)), reference_count_(reference_count) {
  if (reference_count < 0) throw ContractError("ground truth: negative reference count");
  for (const auto& s : correct_) {
    for (int r : s) {
      if (r < 0 || r >= reference_count) {
        throw ContractError("ground truth references unknown reference " + std::to_string(r));
      }
    }
  }
}

GroundTruth GroundTruth::from_tolerance(int query_count, int reference_count, int tolerance,
                                        std::span<const int> alignment) {
  if (tolerance < 0) throw ContractError("ground truth tolerance must be >= 0");
  if (!alignment.empty() && alignment.size() != static_cast<std::size_t>(query_count)) {
    throw ContractError("ground truth alignment must have one entry per query");
  }
  std::vector<std::set<int>> correct(query_count);
  for (int q = 0; q < query_count; ++q) {
    const int center = alignment.empty() ? q : alignment[q];
    for (int r = std::max(0, center - tolerance);
         r <= std::min(reference_count - 1, center + tolerance); ++r) {
      correct[q].insert(r);
    }
  }
  return GroundTruth(std::move(correct), reference_count);
}

double cosine(const Descriptor& a, const Descriptor& b) {
  if (a.dim() != b.dim()) {
    throw ContractError("cosine: descriptor dims differ (" + std::to_string(a.dim()) + " vs " +
                        std::to_string(b.dim()) + ")");
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += static_cast<double>(a.values[i]) * b.values[i];
  return dot;
}

std::vector<MatchResult> match_all(std::span<const Descriptor> queries,
                                   std::span<const Descriptor> references,
                                   const GroundTruth& truth, int threads) {
  if (references.empty()) throw ContractError("match_all: empty reference set");
  if (truth.query_count() != static_cast<int>(queries.size()) ||
      truth.reference_count() != static_cast<int>(references.size())) {
    throw ContractError("match_all: ground truth does not match query/reference counts");
  }
  std::vector<MatchResult> results(queries.size());
  const int n = static_cast<int>(queries.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads > 0 ? threads : omp_get_max_threads())
  for (int q = 0; q < n; ++q) {
    int best = 0;
    double best_score = cosine(queries[q], references[0]);
    for (std::size_t r = 1; r < references.size(); ++r) {
      const double s = cosine(queries[q], references[r]);
      if (s > best_score) {
        best_score = s;
        best = static_cast<int>(r);
      }
    }
    results[q] = {q, best, best_score, truth.is_correct(q, best)};
  }
  return results;
}

PRCurve pr_curve(std::span<const MatchResult> results) {
  PRCurve curve;
  if (results.empty()) return curve;
  std::vector<MatchResult> sorted(results.begin(), results.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const MatchResult& a, const MatchResult& b) { return a.score > b.score; });
  const double total = static_cast<double>(sorted.size());
  std::size_t retrieved = 0;
  std::size_t hits = 0;
  while (retrieved < sorted.size()) {
    const double t = sorted[retrieved].score;
    while (retrieved < sorted.size() && sorted[retrieved].score == t) {
      hits += sorted[retrieved].correct;
      ++retrieved;
    }
    curve.points.push_back({static_cast<double>(hits) / static_cast<double>(retrieved),
                            static_cast<double>(hits) / total, t});
  }
  return curve;
}

double precision_at_min_recall(const PRCurve& curve) {
  return curve.points.empty() ? 0.0 : curve.points.front().precision;
}

double recall_at_full_precision(const PRCurve& curve) {
  double best = 0.0;
  for (const PRPoint& p : curve.points) {
    if (p.precision == 1.0) best = std::max(best, p.recall);
  }
  return best;
}

double extended_precision(const PRCurve& curve) {
  return (precision_at_min_recall(curve) + recall_at_full_precision(curve)) / 2.0;
}

double auc(const PRCurve& curve) {
  if (curve.points.empty()) return 0.0;
  double area = 0.0;
  double prev_r = 0.0;
  double prev_p = curve.points.front().precision;
  for (const PRPoint& p : curve.points) {
    area += (p.recall - prev_r) * (p.precision + prev_p) / 2.0;
    prev_r = p.recall;
    prev_p = p.precision;
  }
  return area;
}

double tp_percent(std::span<const MatchResult> results) {
  if (results.empty()) return 0.0;
  const auto hits = std::count_if(results.begin(), results.end(),
                                  [](const MatchResult& m) { return m.correct; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(results.size());
}

MetricsReport evaluate(std::span<const MatchResult> results) {
  MetricsReport m;
  m.curve = pr_curve(results);
  m.p_r0 = precision_at_min_recall(m.curve);
  m.r_p100 = recall_at_full_precision(m.curve);
  m.ep = (m.p_r0 + m.r_p100) / 2.0;
  m.auc = auc(m.curve);
  m.tp_percent = tp_percent(results);
  return m;
}

}  // namespace hbnet
