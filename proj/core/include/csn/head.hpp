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

#ifndef CSN_HEAD_HPP_
#define CSN_HEAD_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csn/autodiff.hpp"
#include "csn/backbone.hpp"
#include "csn/registry.hpp"
#include "csn/tensor.hpp"

namespace csn {

// How attributes map onto localization (V) and pattern (W) parameters.
//   none             private V and W per attribute
//   part_only        V shared by part, W private per attribute
//   part_and_pattern V shared by part, W shared by pattern
//   soft             W shared by pattern, attention mixes every part's logits
//                    with learnable per-attribute weights T
enum class SharingMode { kNone, kPartOnly, kPartAndPattern, kSoft };

enum class SoftInit { kOneHot, kAllOnes };

std::string to_string(SharingMode mode);
SharingMode parse_sharing_mode(const std::string& name);
std::string to_string(SoftInit init);
SoftInit parse_soft_init(const std::string& name);

// Parameter slots used by one attribute.
struct HeadBinding {
  std::size_t part_slot = 0;
  std::size_t pattern_slot = 0;
  std::optional<std::size_t> soft_slot;
  friend bool operator==(const HeadBinding&, const HeadBinding&) = default;
};

struct CsnHeadParams {
  std::vector<Tensor> part_vectors;         // d x 1 each
  std::vector<Tensor> pattern_classifiers;  // d x 2 each
  std::vector<Tensor> pattern_biases;       // 1 x 2 per classifier, or empty
  std::vector<Tensor> soft_weights;         // m x 1 each, soft mode only
};

struct CsnHead {
  SharingMode mode = SharingMode::kPartAndPattern;
  CsnHeadParams params;
  std::map<int, HeadBinding> bindings;  // keyed by attribute id

  const HeadBinding& binding(int attribute_id) const;
};

// V ~ normal(0, 0.1); W ~ uniform(-a, a), a = sqrt(6 / (d + 2)); T one-hot at
// the attribute's part or all ones. Classifier biases, when enabled, start at
// zero and live in the same slots as W.
CsnHead init_head(const ConceptRegistry& registry, SharingMode mode,
                  std::size_t feature_dim, std::uint64_t seed,
                  SoftInit soft_init = SoftInit::kOneHot, bool classifier_bias = true);

struct AttentionMap {
  Tensor weights;  // hw x 1, non-negative, sums to 1
  std::size_t h = 0;
  std::size_t w = 0;
};

struct ProbabilityPair {
  double p_neg = 0.5;
  double p_pos = 0.5;
};

// -- tape-recorded pieces ------------------------------------------------------

// A = Q v (hw x 1).
ad::Var attention_logits(ad::Var features, ad::Var part_vector);
// Spatial softmax over all hw cells jointly.
ad::Var attention_normalize(ad::Var logits);
// (1/hw) sum_r att_r Q_r, as a 1 x d row.
ad::Var attend_and_pool(ad::Var features, ad::Var attention);
// descriptor (1 x d) times W (d x 2) -> 1 x 2 logits, plus an optional 1 x 2 bias.
ad::Var pattern_logits(ad::Var descriptor, ad::Var classifier);
ad::Var pattern_logits(ad::Var descriptor, ad::Var classifier, ad::Var bias);
// sum_i t_i Q V_i, hw x 1.
ad::Var soft_attention_logits(ad::Var features, ad::Var soft_weights,
                              std::span<const ad::Var> part_vectors);

// -- plain tensor versions -------------------------------------------------

Tensor attention_logits(const FeatureMap& features, const Tensor& part_vector);
AttentionMap attention_normalize(const Tensor& logits, std::size_t h, std::size_t w);
// Returns the d x 1 descriptor.
Tensor attend_and_pool(const FeatureMap& features, const AttentionMap& attention);
AttentionMap soft_attention(const FeatureMap& features, const Tensor& soft_weights,
                            std::span<const Tensor> part_vectors);

struct HeadVars {
  std::vector<ad::Var> parts;
  std::vector<ad::Var> patterns;
  std::vector<ad::Var> biases;  // empty without classifier bias
  std::vector<ad::Var> soft;
};

// Evaluates attribute heads on one feature map. Attention and pooled
// descriptors are computed once per part slot and shared by every attribute
// bound to it.
class HeadEvaluator {
 public:
  HeadEvaluator(const CsnHead& head, HeadVars vars, FeatureVar features);

  ad::Var attention(int attribute_id);
  ad::Var logits(int attribute_id);
  const FeatureVar& features() const { return features_; }

 private:
  struct Pooled {
    ad::Var attention;
    ad::Var descriptor;
  };
  const Pooled& pooled(const HeadBinding& b);

  const CsnHead& head_;
  HeadVars vars_;
  FeatureVar features_;
  std::optional<ad::Var> soft_basis_;
  std::map<std::size_t, Pooled> by_part_;
  std::map<std::size_t, Pooled> by_soft_;
};

ProbabilityPair probabilities_from_logits(const Tensor& logits);

ProbabilityPair predict_attribute(const FeatureMap& features, int attribute_id,
                                  const CsnHead& head,
                                  const ConceptRegistry& registry);
AttentionMap attribute_attention(const FeatureMap& features, int attribute_id,
                                 const CsnHead& head,
                                 const ConceptRegistry& registry);

// Registers (part, pattern) as a new attribute bound to the already trained
// part vector and pattern classifier. Creates no parameters. Requires
// part_and_pattern sharing and an existing attribute on both the part and
// the pattern; otherwise throws CompositionError.
AttributeSpec compose_zero_shot(ConceptRegistry& registry, CsnHead& head,
                                int part, int pattern,
                                std::optional<int> attribute_id = std::nullopt,
                                std::string name = {});

}  // namespace csn

#endif  // CSN_HEAD_HPP_
