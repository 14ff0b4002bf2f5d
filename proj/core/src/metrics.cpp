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

#include "csn/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "csn/errors.hpp"

namespace csn {

std::size_t RankedPredictions::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("average_precision: " + std::to_string(scores.size()) +
                         " scores for " + std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] == 1) {
      ++hits;
      total += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) throw UndefinedMetricError("average precision undefined: no positive labels");
  return total / static_cast<double>(hits);
}

double average_precision(const RankedPredictions& preds) {
  return average_precision(preds.scores, preds.labels);
}

double prevalence(std::span<const int> labels) {
  if (labels.empty()) throw UndefinedMetricError("prevalence of an empty label set");
  return static_cast<double>(std::count(labels.begin(), labels.end(), 1)) /
         static_cast<double>(labels.size());
}

double localization_mass(const AttentionMap& attention, const BinaryMask& grid_mask) {
  if (grid_mask.h != attention.h || grid_mask.w != attention.w ||
      attention.weights.size() != grid_mask.cells.size()) {
    throw DimensionError("localization_mass: attention grid " +
                         std::to_string(attention.h) + "x" + std::to_string(attention.w) +
                         " vs mask " + std::to_string(grid_mask.h) + "x" +
                         std::to_string(grid_mask.w));
  }
  if (grid_mask.count() == 0) {
    throw UndefinedMetricError("localization mass undefined for an empty mask");
  }
  double mass = 0.0;
  for (std::size_t r = 0; r < grid_mask.cells.size(); ++r)
    if (grid_mask.cells[r]) mass += attention.weights[r];
  return mass;
}

}  // namespace csn
