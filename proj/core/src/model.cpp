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

#include "csn/model.hpp"

#include <cstring>

#include "csn/errors.hpp"

namespace csn {

std::vector<std::string> CsnModel::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < backbone.kernels.size(); ++i) {
    names.push_back("backbone.conv" + std::to_string(i) + ".kernel");
    names.push_back("backbone.conv" + std::to_string(i) + ".bias");
  }
  for (std::size_t i = 0; i < head.params.part_vectors.size(); ++i)
    names.push_back("head.part." + std::to_string(i));
  for (std::size_t i = 0; i < head.params.pattern_classifiers.size(); ++i)
    names.push_back("head.pattern." + std::to_string(i));
  for (std::size_t i = 0; i < head.params.pattern_biases.size(); ++i)
    names.push_back("head.pattern_bias." + std::to_string(i));
  for (std::size_t i = 0; i < head.params.soft_weights.size(); ++i)
    names.push_back("head.soft." + std::to_string(i));
  return names;
}

std::vector<const Tensor*> CsnModel::parameters() const {
  std::vector<const Tensor*> out;
  for (std::size_t i = 0; i < backbone.kernels.size(); ++i) {
    out.push_back(&backbone.kernels[i]);
    out.push_back(&backbone.biases[i]);
  }
  for (const auto& t : head.params.part_vectors) out.push_back(&t);
  for (const auto& t : head.params.pattern_classifiers) out.push_back(&t);
  for (const auto& t : head.params.pattern_biases) out.push_back(&t);
  for (const auto& t : head.params.soft_weights) out.push_back(&t);
  return out;
}

std::vector<Tensor*> CsnModel::mutable_parameters() {
  std::vector<Tensor*> out;
  for (std::size_t i = 0; i < backbone.kernels.size(); ++i) {
    out.push_back(&backbone.kernels[i]);
    out.push_back(&backbone.biases[i]);
  }
  for (auto& t : head.params.part_vectors) out.push_back(&t);
  for (auto& t : head.params.pattern_classifiers) out.push_back(&t);
  for (auto& t : head.params.pattern_biases) out.push_back(&t);
  for (auto& t : head.params.soft_weights) out.push_back(&t);
  return out;
}

CsnModel make_model(const BackboneConfig& backbone_config, ConceptRegistry registry,
                    SharingMode mode, std::uint64_t seed, SoftInit soft_init,
                    bool classifier_bias) {
  CsnModel model;
  model.backbone_config = backbone_config;
  model.backbone = init_backbone(backbone_config, seed);
  // Distinct stream for the head so backbone init is independent of the mode.
  model.head = init_head(registry, mode, backbone_config.feature_dim(),
                         seed ^ 0x9e3779b97f4a7c15ULL, soft_init, classifier_bias);
  model.registry = std::move(registry);
  return model;
}

std::vector<ad::Var> bind_parameters(ad::Tape& tape, const CsnModel& model,
                                     bool differentiable) {
  std::vector<ad::Var> vars;
  for (const Tensor* p : model.parameters()) {
    vars.push_back(differentiable ? tape.leaf(*p, "param") : tape.constant(*p, "param"));
  }
  return vars;
}

namespace {

HeadEvaluator make_evaluator(const CsnModel& model, std::span<const ad::Var> params,
                             ad::Var image) {
  const std::size_t nb = model.backbone_parameter_count();
  const auto& hp = model.head.params;
  const std::size_t expected = nb + hp.part_vectors.size() +
                               hp.pattern_classifiers.size() + hp.pattern_biases.size() +
                               hp.soft_weights.size();
  if (params.size() != expected) {
    throw DimensionError("model graph: expected " + std::to_string(expected) +
                         " parameter vars, got " + std::to_string(params.size()));
  }
  FeatureVar features = extract_features(image, params.subspan(0, nb), model.backbone_config);
  HeadVars vars;
  std::size_t at = nb;
  for (std::size_t i = 0; i < hp.part_vectors.size(); ++i) vars.parts.push_back(params[at++]);
  for (std::size_t i = 0; i < hp.pattern_classifiers.size(); ++i)
    vars.patterns.push_back(params[at++]);
  for (std::size_t i = 0; i < hp.pattern_biases.size(); ++i) vars.biases.push_back(params[at++]);
  for (std::size_t i = 0; i < hp.soft_weights.size(); ++i) vars.soft.push_back(params[at++]);
  return HeadEvaluator(model.head, std::move(vars), features);
}

}  // namespace

ModelGraph::ModelGraph(const CsnModel& model, std::span<const ad::Var> params,
                       ad::Var image)
    : head_(make_evaluator(model, params, image)) {}

ProbabilityPair predict(const CsnModel& model, const Tensor& image, int attribute_id) {
  if (!model.registry.contains(attribute_id)) {
    throw LookupError("unknown attribute id " + std::to_string(attribute_id));
  }
  ad::Tape tape;
  auto params = bind_parameters(tape, model, false);
  ModelGraph graph(model, params, tape.constant(image, "image"));
  return probabilities_from_logits(graph.logits(attribute_id).value());
}

AttentionMap attention_map(const CsnModel& model, const Tensor& image, int attribute_id) {
  if (!model.registry.contains(attribute_id)) {
    throw LookupError("unknown attribute id " + std::to_string(attribute_id));
  }
  ad::Tape tape;
  auto params = bind_parameters(tape, model, false);
  ModelGraph graph(model, params, tape.constant(image, "image"));
  return {graph.attention(attribute_id).value(), graph.features().h, graph.features().w};
}

std::uint64_t parameter_checksum(const CsnModel& model) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Tensor* p : model.parameters()) {
    for (double v : p->data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

}  // namespace csn
