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

#include "csn/head.hpp"

#include <cmath>
#include <random>

#include "csn/errors.hpp"

namespace csn {

std::string to_string(SharingMode mode) {
  switch (mode) {
    case SharingMode::kNone: return "none";
    case SharingMode::kPartOnly: return "part_only";
    case SharingMode::kPartAndPattern: return "part_and_pattern";
    case SharingMode::kSoft: return "soft";
  }
  return "?";
}

SharingMode parse_sharing_mode(const std::string& name) {
  if (name == "none") return SharingMode::kNone;
  if (name == "part_only") return SharingMode::kPartOnly;
  if (name == "part_and_pattern") return SharingMode::kPartAndPattern;
  if (name == "soft") return SharingMode::kSoft;
  throw ConfigError("unknown sharing mode '" + name + "'");
}

std::string to_string(SoftInit init) {
  return init == SoftInit::kOneHot ? "one_hot" : "all_ones";
}

SoftInit parse_soft_init(const std::string& name) {
  if (name == "one_hot") return SoftInit::kOneHot;
  if (name == "all_ones") return SoftInit::kAllOnes;
  throw ConfigError("unknown soft init '" + name + "'");
}

const HeadBinding& CsnHead::binding(int attribute_id) const {
  auto it = bindings.find(attribute_id);
  if (it == bindings.end()) {
    throw LookupError("no head bound for attribute " + std::to_string(attribute_id));
  }
  return it->second;
}

CsnHead init_head(const ConceptRegistry& registry, SharingMode mode,
                  std::size_t feature_dim, std::uint64_t seed, SoftInit soft_init,
                  bool classifier_bias) {
  if (feature_dim < 2) throw ConfigError("head: feature_dim must be >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> part_dist(0.0, 0.1);
  const double a = std::sqrt(6.0 / static_cast<double>(feature_dim + 2));
  std::uniform_real_distribution<double> pattern_dist(-a, a);
  auto new_part = [&] {
    Tensor v({feature_dim, 1});
    for (auto& x : v.mutable_data()) x = part_dist(rng);
    return v;
  };
  auto new_pattern = [&] {
    Tensor w({feature_dim, 2});
    for (auto& x : w.mutable_data()) x = pattern_dist(rng);
    return w;
  };

  CsnHead head;
  head.mode = mode;
  auto& p = head.params;
  const bool shared_parts = mode != SharingMode::kNone;
  const bool shared_patterns =
      mode == SharingMode::kPartAndPattern || mode == SharingMode::kSoft;
  if (shared_parts)
    for (std::size_t i = 0; i < registry.num_parts(); ++i) p.part_vectors.push_back(new_part());
  if (shared_patterns)
    for (std::size_t j = 0; j < registry.num_patterns(); ++j)
      p.pattern_classifiers.push_back(new_pattern());

  for (const auto& attr : registry.attributes()) {
    HeadBinding b;
    if (shared_parts) {
      b.part_slot = static_cast<std::size_t>(attr.part);
    } else {
      b.part_slot = p.part_vectors.size();
      p.part_vectors.push_back(new_part());
    }
    if (shared_patterns) {
      b.pattern_slot = static_cast<std::size_t>(attr.pattern);
    } else {
      b.pattern_slot = p.pattern_classifiers.size();
      p.pattern_classifiers.push_back(new_pattern());
    }
    if (mode == SharingMode::kSoft) {
      Tensor t({registry.num_parts(), 1},
               soft_init == SoftInit::kAllOnes ? 1.0 : 0.0);
      if (soft_init == SoftInit::kOneHot) t[static_cast<std::size_t>(attr.part)] = 1.0;
      b.soft_slot = p.soft_weights.size();
      p.soft_weights.push_back(std::move(t));
    }
    head.bindings[attr.id] = b;
  }
  if (classifier_bias) p.pattern_biases.assign(p.pattern_classifiers.size(), Tensor({1, 2}));
  return head;
}

// -- tape-recorded pieces ------------------------------------------------------

ad::Var attention_logits(ad::Var features, ad::Var part_vector) {
  return ad::matmul(features, part_vector);
}

ad::Var attention_normalize(ad::Var logits) {
  const Shape shape = logits.shape();
  if (shape.size() != 2 || shape[1] != 1) {
    throw DimensionError("attention_normalize expects hw x 1 logits, got " +
                         shape_string(shape));
  }
  ad::Var row = ad::reshape(logits, {1, shape[0]});
  return ad::reshape(ad::softmax_rows(row), shape);
}

ad::Var attend_and_pool(ad::Var features, ad::Var attention) {
  return ad::mean_over_axis(ad::broadcast_mul(features, attention), 0);
}

ad::Var pattern_logits(ad::Var descriptor, ad::Var classifier) {
  return ad::matmul(descriptor, classifier);
}

ad::Var pattern_logits(ad::Var descriptor, ad::Var classifier, ad::Var bias) {
  return ad::add(ad::matmul(descriptor, classifier), bias);
}

ad::Var soft_attention_logits(ad::Var features, ad::Var soft_weights,
                              std::span<const ad::Var> part_vectors) {
  if (soft_weights.value().size() != part_vectors.size()) {
    throw DimensionError("soft_attention: " +
                         std::to_string(soft_weights.value().size()) +
                         " weights for " + std::to_string(part_vectors.size()) +
                         " parts");
  }
  ad::Var basis = ad::matmul(features, ad::concat_cols(part_vectors));
  return ad::matmul(basis, ad::reshape(soft_weights, {part_vectors.size(), 1}));
}

// -- plain tensor versions -------------------------------------------------

Tensor attention_logits(const FeatureMap& features, const Tensor& part_vector) {
  return ad::matmul(features.values, part_vector);
}

AttentionMap attention_normalize(const Tensor& logits, std::size_t h, std::size_t w) {
  if (logits.size() != h * w) {
    throw DimensionError("attention_normalize: " + shape_string(logits.shape()) +
                         " logits for a " + std::to_string(h) + "x" +
                         std::to_string(w) + " grid");
  }
  Tensor row = ad::softmax_rows(logits.reshaped({1, h * w}));
  return {row.reshaped({h * w, 1}), h, w};
}

Tensor attend_and_pool(const FeatureMap& features, const AttentionMap& attention) {
  ad::Tape tape;
  ad::Var pooled = attend_and_pool(tape.constant(features.values),
                                   tape.constant(attention.weights));
  return pooled.value().reshaped({pooled.value().size(), 1});
}

AttentionMap soft_attention(const FeatureMap& features, const Tensor& soft_weights,
                            std::span<const Tensor> part_vectors) {
  ad::Tape tape;
  std::vector<ad::Var> parts;
  for (const auto& v : part_vectors) parts.push_back(tape.constant(v));
  ad::Var logits = soft_attention_logits(tape.constant(features.values),
                                         tape.constant(soft_weights), parts);
  return attention_normalize(logits.value(), features.h, features.w);
}

// -- evaluator -------------------------------------------------------------

HeadEvaluator::HeadEvaluator(const CsnHead& head, HeadVars vars, FeatureVar features)
    : head_(head), vars_(std::move(vars)), features_(features) {}

const HeadEvaluator::Pooled& HeadEvaluator::pooled(const HeadBinding& b) {
  if (head_.mode == SharingMode::kSoft) {
    const std::size_t slot = b.soft_slot.value();
    auto it = by_soft_.find(slot);
    if (it != by_soft_.end()) return it->second;
    if (!soft_basis_) {
      soft_basis_ = ad::matmul(features_.values, ad::concat_cols(vars_.parts));
    }
    const std::size_t m = vars_.parts.size();
    if (vars_.soft.at(slot).value().size() != m) {
      throw DimensionError("soft weights length does not match part count");
    }
    ad::Var logits = ad::matmul(*soft_basis_, ad::reshape(vars_.soft.at(slot), {m, 1}));
    ad::Var att = attention_normalize(logits);
    return by_soft_.emplace(slot, Pooled{att, attend_and_pool(features_.values, att)})
        .first->second;
  }
  auto it = by_part_.find(b.part_slot);
  if (it != by_part_.end()) return it->second;
  ad::Var att =
      attention_normalize(attention_logits(features_.values, vars_.parts.at(b.part_slot)));
  return by_part_.emplace(b.part_slot, Pooled{att, attend_and_pool(features_.values, att)})
      .first->second;
}

ad::Var HeadEvaluator::attention(int attribute_id) {
  return pooled(head_.binding(attribute_id)).attention;
}

ad::Var HeadEvaluator::logits(int attribute_id) {
  const HeadBinding& b = head_.binding(attribute_id);
  const ad::Var descriptor = pooled(b).descriptor;
  if (vars_.biases.empty()) return pattern_logits(descriptor, vars_.patterns.at(b.pattern_slot));
  return pattern_logits(descriptor, vars_.patterns.at(b.pattern_slot),
                        vars_.biases.at(b.pattern_slot));
}

ProbabilityPair probabilities_from_logits(const Tensor& logits) {
  Tensor p = ad::softmax_rows(logits.reshaped({1, 2}));
  return {p[0], p[1]};
}

namespace {

HeadVars bind_constants(ad::Tape& tape, const CsnHeadParams& p) {
  HeadVars vars;
  for (const auto& v : p.part_vectors) vars.parts.push_back(tape.constant(v));
  for (const auto& w : p.pattern_classifiers) vars.patterns.push_back(tape.constant(w));
  for (const auto& b : p.pattern_biases) vars.biases.push_back(tape.constant(b));
  for (const auto& t : p.soft_weights) vars.soft.push_back(tape.constant(t));
  return vars;
}

void require_registered(const ConceptRegistry& registry, int attribute_id) {
  if (!registry.contains(attribute_id)) {
    throw LookupError("unknown attribute id " + std::to_string(attribute_id));
  }
}

}  // namespace

ProbabilityPair predict_attribute(const FeatureMap& features, int attribute_id,
                                  const CsnHead& head,
                                  const ConceptRegistry& registry) {
  require_registered(registry, attribute_id);
  ad::Tape tape;
  HeadEvaluator eval(head, bind_constants(tape, head.params),
                     {tape.constant(features.values), features.h, features.w});
  return probabilities_from_logits(eval.logits(attribute_id).value());
}

AttentionMap attribute_attention(const FeatureMap& features, int attribute_id,
                                 const CsnHead& head,
                                 const ConceptRegistry& registry) {
  require_registered(registry, attribute_id);
  ad::Tape tape;
  HeadEvaluator eval(head, bind_constants(tape, head.params),
                     {tape.constant(features.values), features.h, features.w});
  return {eval.attention(attribute_id).value(), features.h, features.w};
}

AttributeSpec compose_zero_shot(ConceptRegistry& registry, CsnHead& head, int part,
                                int pattern, std::optional<int> attribute_id,
                                std::string name) {
  if (head.mode != SharingMode::kPartAndPattern) {
    throw CompositionError("zero-shot composition needs part_and_pattern sharing, head uses " +
                           to_string(head.mode));
  }
  if (part < 0 || part >= static_cast<int>(registry.num_parts())) {
    throw CompositionError("unknown part " + std::to_string(part));
  }
  if (pattern < 0 || pattern >= static_cast<int>(registry.num_patterns())) {
    throw CompositionError("unknown pattern " + std::to_string(pattern));
  }
  if (registry.find(part, pattern)) {
    throw CompositionError("(part " + std::to_string(part) + ", pattern " +
                           std::to_string(pattern) + ") is already a trained attribute");
  }
  bool part_covered = false, pattern_covered = false;
  for (const auto& a : registry.attributes()) {
    part_covered = part_covered || a.part == part;
    pattern_covered = pattern_covered || a.pattern == pattern;
  }
  if (!part_covered || !pattern_covered) {
    std::string missing;
    if (!part_covered) missing += "part " + std::to_string(part) + " (" +
                                  registry.parts()[part].name + ") untrained";
    if (!pattern_covered) {
      if (!missing.empty()) missing += "; ";
      missing += "pattern " + std::to_string(pattern) + " (" +
                 registry.patterns()[pattern].name + ") untrained";
    }
    throw CompositionError("cannot compose: " + missing);
  }
  AttributeSpec spec{attribute_id.value_or(registry.next_attribute_id()), part, pattern,
                     std::move(name)};
  registry.add_attribute(spec);
  const AttributeSpec& added = registry.attribute(spec.id);
  head.bindings[added.id] = HeadBinding{static_cast<std::size_t>(part),
                                        static_cast<std::size_t>(pattern), std::nullopt};
  return added;
}

}  // namespace csn
