// Copyright 2026 The CSN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CSN_METRICS_HPP_
#define CSN_METRICS_HPP_

#include <span>
#include <vector>

#include "csn/head.hpp"
#include "csn/mask.hpp"

namespace csn {

// (score, label) pairs for one attribute; score is p_pos.
struct RankedPredictions {
  std::vector<double> scores;
  std::vector<int> labels;

  void add(double score, int label) {
    scores.push_back(score);
    labels.push_back(label);
  }
  std::size_t size() const { return scores.size(); }
  std::size_t positives() const;
};

// Mean over positives of the precision at each positive's rank. Ranks come
// from a stable descending sort on score, so ties keep input order. Throws
// UndefinedMetricError when there is no positive label.
double average_precision(std::span<const double> scores, std::span<const int> labels);
double average_precision(const RankedPredictions& preds);

// Positive rate: the AP floor used for a constant scorer.
double prevalence(std::span<const int> labels);

// Attention mass on the marked cells. Throws UndefinedMetricError for an
// empty mask and DimensionError when the grid sizes differ.
double localization_mass(const AttentionMap& attention, const BinaryMask& grid_mask);

}  // namespace csn

#endif  // CSN_METRICS_HPP_
