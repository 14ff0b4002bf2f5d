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

#include "csn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csn/errors.hpp"
#include "csn/metrics.hpp"

namespace csn {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

double TrainConfig::learning_rate_at(int epoch) const {
  return 2 * epoch < epochs ? learning_rate : 0.1 * learning_rate;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size <= 0) throw ConfigError("train: batch_size must be > 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("train: validation_fraction must lie in [0, 1)");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"sharing_mode", to_string(c.sharing_mode)},
                     {"soft_init", to_string(c.soft_init)},
                     {"classifier_bias", c.classifier_bias},
                     {"optimizer", to_string(c.optimizer)},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"epsilon", c.epsilon},
                     {"validation_fraction", c.validation_fraction}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("sharing_mode"))
    c.sharing_mode = parse_sharing_mode(j.at("sharing_mode").get<std::string>());
  if (j.contains("soft_init")) c.soft_init = parse_soft_init(j.at("soft_init").get<std::string>());
  c.classifier_bias = j.value("classifier_bias", c.classifier_bias);
  if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
}

ad::Var attribute_loss(ad::Var logits, int label) {
  if (label != 0 && label != 1) {
    throw ContractError("attribute_loss: label must be 0 or 1, got " + std::to_string(label));
  }
  if (logits.value().size() != 2) {
    throw DimensionError("attribute_loss: expected two logits, got " +
                         shape_string(logits.shape()));
  }
  ad::Var lsm = ad::log_softmax_rows(ad::reshape(logits, {1, 2}));
  return ad::negate(ad::select(lsm, static_cast<std::size_t>(label)));
}

BatchGradients batch_gradients(const CsnModel& model, const TrainingSet& data,
                               std::span<const std::size_t> example_indices) {
  const auto params = model.parameters();
  BatchGradients out;
  for (const Tensor* p : params) out.grads.emplace_back(p->shape(), 0.0);

  // Group by image, keeping first-appearance order so the summation order is
  // a fixed function of the index list.
  std::vector<std::size_t> image_order;
  std::map<std::size_t, std::vector<std::size_t>> by_image;
  for (std::size_t idx : example_indices) {
    if (idx >= data.examples.size()) throw LookupError("example index out of range");
    const std::size_t img = data.examples[idx].image;
    auto [it, fresh] = by_image.try_emplace(img);
    if (fresh) image_order.push_back(img);
    it->second.push_back(idx);
  }

  for (std::size_t img : image_order) {
    if (img >= data.images.size()) throw LookupError("image index out of range");
    ad::Tape tape;
    auto vars = bind_parameters(tape, model, true);
    ModelGraph graph(model, vars, tape.constant(data.images[img], "image"));
    std::optional<ad::Var> total;
    for (std::size_t idx : by_image[img]) {
      const LabeledExample& ex = data.examples[idx];
      ad::Var loss = attribute_loss(graph.logits(ex.attribute_id), ex.label);
      total = total ? ad::add(*total, loss) : loss;
      ++out.examples;
    }
    tape.backward(*total);
    out.loss += total->value()[0];
    for (std::size_t p = 0; p < vars.size(); ++p) {
      Tensor g = tape.grad(vars[p]);
      auto dst = out.grads[p].mutable_data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }
  }
  return out;
}

void apply_update(CsnModel& model, const std::vector<Tensor>& grads, OptimizerState& state,
                  const TrainConfig& config, double learning_rate) {
  auto params = model.mutable_parameters();
  if (grads.size() != params.size()) {
    throw DimensionError("apply_update: gradient count does not match parameters");
  }
  state.kind = config.optimizer;
  if (config.optimizer == OptimizerKind::kSgd) {
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto v = params[p]->mutable_data();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= learning_rate * grads[p][i];
    }
    ++state.step;
    return;
  }
  if (state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->shape(), 0.0);
      state.second_moment.emplace_back(p->shape(), 0.0);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto v = params[p]->mutable_data();
    auto m = state.first_moment[p].mutable_data();
    auto s = state.second_moment[p].mutable_data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double g = grads[p][i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      s[i] = config.beta2 * s[i] + (1.0 - config.beta2) * g * g;
      v[i] -= learning_rate * (m[i] / c1) / (std::sqrt(s[i] / c2) + config.epsilon);
    }
  }
}

bool in_validation_split(std::size_t image_index, std::uint64_t seed, double fraction) {
  if (fraction <= 0.0) return false;
  // splitmix64 finalizer
  std::uint64_t z = seed ^ (0x9e3779b97f4a7c15ULL * (image_index + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return static_cast<double>(z >> 11) * 0x1.0p-53 < fraction;
}

namespace {

std::map<int, double> validation_ap(const CsnModel& model, const TrainingSet& data,
                                    const std::vector<std::size_t>& val_images,
                                    const std::vector<std::vector<std::size_t>>& by_image) {
  std::map<int, RankedPredictions> preds;
  for (std::size_t img : val_images) {
    if (by_image[img].empty()) continue;
    ad::Tape tape;
    auto vars = bind_parameters(tape, model, false);
    ModelGraph graph(model, vars, tape.constant(data.images[img], "image"));
    for (std::size_t idx : by_image[img]) {
      const auto& ex = data.examples[idx];
      preds[ex.attribute_id].add(
          probabilities_from_logits(graph.logits(ex.attribute_id).value()).p_pos, ex.label);
    }
  }
  std::map<int, double> out;
  for (const auto& [k, p] : preds)
    if (p.positives() > 0) out[k] = average_precision(p);
  return out;
}

}  // namespace

void init_classifier_prior(CsnModel& model, const TrainingSet& data,
                           std::span<const std::size_t> example_indices) {
  auto& biases = model.head.params.pattern_biases;
  if (biases.empty()) return;
  std::vector<double> pos(biases.size(), 0.0), n(biases.size(), 0.0);
  for (std::size_t i : example_indices) {
    const auto& ex = data.examples.at(i);
    const std::size_t slot = model.head.binding(ex.attribute_id).pattern_slot;
    pos[slot] += ex.label;
    n[slot] += 1.0;
  }
  for (std::size_t s = 0; s < biases.size(); ++s) {
    if (n[s] == 0.0) continue;
    const double rate = std::clamp(pos[s] / n[s], 1e-3, 1.0 - 1e-3);
    biases[s][0] = 0.0;
    biases[s][1] = std::log(rate / (1.0 - rate));
  }
}

TrainResult train(CsnModel model, const TrainingSet& data, const TrainConfig& config,
                  std::optional<TrainState> resume) {
  config.validate();
  if (model.head.mode != config.sharing_mode) {
    throw ConfigError("train: model uses " + to_string(model.head.mode) +
                      " sharing but config asks for " + to_string(config.sharing_mode));
  }
  std::vector<std::vector<std::size_t>> by_image(data.images.size());
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    const auto& ex = data.examples[i];
    if (!model.registry.contains(ex.attribute_id)) {
      throw LookupError("example " + std::to_string(i) + " references unknown attribute " +
                        std::to_string(ex.attribute_id));
    }
    if (ex.image >= data.images.size()) {
      throw LookupError("example " + std::to_string(i) + " references missing image " +
                        std::to_string(ex.image));
    }
    if (ex.label != 0 && ex.label != 1) {
      throw ContractError("example " + std::to_string(i) + " has label " +
                          std::to_string(ex.label));
    }
    by_image[ex.image].push_back(i);
  }

  TrainResult result;
  std::mt19937_64 rng(config.seed);
  if (resume) {
    result.state = std::move(*resume);
    if (!result.state.rng_state.empty()) {
      std::istringstream in(result.state.rng_state);
      in >> rng;
      if (!in) throw FormatError("unreadable rng state in resume data", 0);
    }
  } else {
    result.state.optimizer.kind = config.optimizer;
  }

  std::vector<std::size_t> train_images, val_images;
  for (std::size_t img = 0; img < data.images.size(); ++img) {
    if (by_image[img].empty()) continue;
    (in_validation_split(img, config.seed, config.validation_fraction) ? val_images
                                                                       : train_images)
        .push_back(img);
  }
  if (train_images.empty() && result.state.epoch < config.epochs) {
    throw ContractError("train: no labeled training examples");
  }

  if (!resume && result.state.epoch < config.epochs) {
    std::vector<std::size_t> examples;
    for (std::size_t img : train_images)
      examples.insert(examples.end(), by_image[img].begin(), by_image[img].end());
    init_classifier_prior(model, data, examples);
  }

  const auto names = model.parameter_names();
  for (int epoch = result.state.epoch; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate_at(epoch);
    std::shuffle(train_images.begin(), train_images.end(), rng);
    double loss_sum = 0.0;
    std::size_t count = 0;
    std::vector<std::size_t> batch;
    for (std::size_t start = 0; start < train_images.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(train_images.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t b = start; b < stop; ++b)
        batch.insert(batch.end(), by_image[train_images[b]].begin(),
                     by_image[train_images[b]].end());
      BatchGradients g = batch_gradients(model, data, batch);
      if (!std::isfinite(g.loss)) {
        throw NumericError("non-finite loss in epoch " + std::to_string(epoch) +
                           ", batch starting at " + std::to_string(start));
      }
      for (std::size_t p = 0; p < g.grads.size(); ++p) {
        if (!g.grads[p].all_finite()) {
          throw NumericError("non-finite gradient for " + names[p] + " in epoch " +
                             std::to_string(epoch));
        }
      }
      apply_update(model, g.grads, result.state.optimizer, config, lr);
      loss_sum += g.loss;
      count += g.examples;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    rec.mean_loss = count ? loss_sum / static_cast<double>(count) : 0.0;
    rec.validation_ap = validation_ap(model, data, val_images, by_image);
    result.history.push_back(std::move(rec));
    result.state.epoch = epoch + 1;
  }

  std::ostringstream rng_out;
  rng_out << rng;
  result.state.rng_state = rng_out.str();
  result.model = std::move(model);
  return result;
}

}  // namespace csn
