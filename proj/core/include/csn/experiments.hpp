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

#ifndef CSN_EXPERIMENTS_HPP_
#define CSN_EXPERIMENTS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "csn/backbone.hpp"
#include "csn/model.hpp"
#include "csn/synthgen.hpp"
#include "csn/training.hpp"

namespace csn {

struct AttributeEval {
  int attribute = 0;
  std::string name;
  std::size_t positives = 0;
  std::size_t examples = 0;
  double prevalence = 0.0;
  std::optional<double> ap;            // absent without test positives
  std::optional<double> localization;  // mean mass over positive examples
};

struct EvalReport {
  std::vector<AttributeEval> attributes;
  double mean_ap = 0.0;
  double mean_localization = 0.0;
  double mean_prevalence = 0.0;
  // fraction of grid cells marked by positive examples' part masks
  double mean_mask_coverage = 0.0;
  double max_mask_coverage = 0.0;
  nlohmann::json metadata;  // sharing_mode, cap, holdout, seed, ...

  const AttributeEval* find(int attribute_id) const;
};

// Scores `attribute_ids` (all registered ones when empty) on a fully labeled
// test split. `specs` supplies ground-truth masks for localization; leave it
// empty to skip localization.
EvalReport evaluate_model(const CsnModel& model, const std::vector<Tensor>& images,
                          const std::vector<LabelRecord>& records,
                          const std::vector<SceneSpec>& specs, const GenConfig& gen,
                          std::vector<int> attribute_ids = {});

struct Arm {
  SharingMode sharing_mode = SharingMode::kPartAndPattern;
  std::optional<std::size_t> positives_cap;  // per attribute; none = unlimited
  std::string label() const;
};

struct ExperimentConfig {
  GenConfig gen;
  BackboneConfig backbone;
  TrainConfig train;
  std::size_t n_train = 600;
  std::size_t n_test = 300;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<Arm> arms;
  std::vector<std::pair<int, int>> holdout;  // zero-shot study only
  std::size_t threads = 1;                   // concurrent (arm, seed) runs
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

// Seed used for the test split of run seed `seed`; disjoint from the
// training scenes' per-index seeds.
std::uint64_t test_split_seed(std::uint64_t seed);

struct ArmSummary {
  Arm arm;
  std::vector<EvalReport> runs;  // one per seed, in seed order
  double mean_ap = 0.0;
  double stdev_ap = 0.0;
  double mean_localization = 0.0;
  double stdev_localization = 0.0;
};

struct AblationReport {
  std::vector<ArmSummary> arms;
  nlohmann::json metadata;
};

// Train and evaluate every arm for every seed. All arms of one seed see the
// same scenes; only label suppression and sharing differ.
AblationReport run_ablation(const ExperimentConfig& config);

struct ZeroShotEntry {
  int attribute = 0;
  std::string name;
  std::uint64_t seed = 0;
  double composed_ap = 0.0;
  double supervised_ap = 0.0;
  double prevalence = 0.0;
};

struct ZeroShotReport {
  std::vector<ZeroShotEntry> composed;    // one per (holdout, seed)
  std::vector<EvalReport> supervised;     // one per seed, all attributes
  nlohmann::json metadata;
};

// Throws CompositionError before any training when a holdout's part or
// pattern has no remaining attribute.
void check_zero_shot_coverage(const ConceptRegistry& registry,
                              const std::vector<std::pair<int, int>>& holdout);

// Trains part_and_pattern sharing with the holdouts suppressed, composes
// their heads, and compares against a no-sharing reference trained on every
// label.
ZeroShotReport run_zero_shot(const ExperimentConfig& config);

nlohmann::json report_json(const EvalReport& report);
nlohmann::json report_json(const AblationReport& report);
nlohmann::json report_json(const ZeroShotReport& report);
std::string report_text(const EvalReport& report);
std::string report_text(const AblationReport& report);
std::string report_text(const ZeroShotReport& report);

}  // namespace csn

#endif  // CSN_EXPERIMENTS_HPP_
