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

#ifndef CSN_TRAINING_HPP_
#define CSN_TRAINING_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "csn/autodiff.hpp"
#include "csn/model.hpp"

namespace csn {

enum class OptimizerKind { kSgd, kAdam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 60;
  int batch_size = 16;  // images per minibatch
  std::uint64_t seed = 0;
  SharingMode sharing_mode = SharingMode::kPartAndPattern;
  SoftInit soft_init = SoftInit::kOneHot;
  bool classifier_bias = true;  // structural; read by make_model callers
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double validation_fraction = 0.2;

  // gamma before the halfway epoch, 0.1 * gamma from it on.
  double learning_rate_at(int epoch) const;
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LabeledExample {
  std::size_t image = 0;  // index into TrainingSet::images
  int attribute_id = 0;
  int label = 0;
};

struct TrainingSet {
  std::vector<Tensor> images;
  std::vector<LabeledExample> examples;
};

// -log p_y from the 1 x 2 logits, via log-softmax.
ad::Var attribute_loss(ad::Var logits, int label);

struct BatchGradients {
  double loss = 0.0;  // summed over examples
  std::size_t examples = 0;
  std::vector<Tensor> grads;  // aligned with CsnModel::parameters()
};

// Gradient of the summed loss over `example_indices`. Examples sharing an
// image share one forward graph; gradients of shared parameters are summed
// over every example that uses them.
BatchGradients batch_gradients(const CsnModel& model, const TrainingSet& data,
                               std::span<const std::size_t> example_indices);

// Sets each classifier slot's bias to (0, log-odds of its positive rate over
// the given examples). Slots without examples and bias-free heads are left
// untouched.
void init_classifier_prior(CsnModel& model, const TrainingSet& data,
                           std::span<const std::size_t> example_indices);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

// One update of every parameter from the summed batch gradient.
void apply_update(CsnModel& model, const std::vector<Tensor>& grads,
                  OptimizerState& state, const TrainConfig& config, double learning_rate);

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  double mean_loss = 0.0;
  std::map<int, double> validation_ap;  // attributes with a validation positive
};

struct TrainState {
  OptimizerState optimizer;
  std::string rng_state;  // textual std::mt19937_64 state
  int epoch = 0;          // epochs completed
};

struct TrainResult {
  CsnModel model;
  TrainState state;
  std::vector<EpochRecord> history;
};

// Images whose seeded hash falls below `fraction` form the validation split.
bool in_validation_split(std::size_t image_index, std::uint64_t seed, double fraction);

// Minibatch training until `config.epochs` epochs have completed in total
// (counting epochs already recorded in `resume`). Throws LookupError before
// any update if an example references an unregistered attribute. A fresh
// run first applies init_classifier_prior over the training split.
TrainResult train(CsnModel model, const TrainingSet& data, const TrainConfig& config,
                  std::optional<TrainState> resume = std::nullopt);

}  // namespace csn

#endif  // CSN_TRAINING_HPP_
