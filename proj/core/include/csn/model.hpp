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

#ifndef CSN_MODEL_HPP_
#define CSN_MODEL_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csn/autodiff.hpp"
#include "csn/backbone.hpp"
#include "csn/head.hpp"
#include "csn/registry.hpp"

namespace csn {

// All trainable state: backbone (Theta), part vectors (V), pattern
// classifiers (W) and soft weights (T).
struct CsnModel {
  BackboneConfig backbone_config;
  BackboneParams backbone;
  ConceptRegistry registry;
  CsnHead head;

  // Flat parameter view in a fixed order: backbone kernel/bias per layer,
  // then part vectors, pattern classifiers, classifier biases, soft weights.
  std::vector<std::string> parameter_names() const;
  std::vector<const Tensor*> parameters() const;
  std::vector<Tensor*> mutable_parameters();
  std::size_t backbone_parameter_count() const { return 2 * backbone.kernels.size(); }
};

CsnModel make_model(const BackboneConfig& backbone_config, ConceptRegistry registry,
                    SharingMode mode, std::uint64_t seed,
                    SoftInit soft_init = SoftInit::kOneHot, bool classifier_bias = true);

// Places every parameter on `tape`, as leaves when `differentiable`.
std::vector<ad::Var> bind_parameters(ad::Tape& tape, const CsnModel& model,
                                     bool differentiable);

// Forward graph of one image through the backbone and attribute heads.
class ModelGraph {
 public:
  ModelGraph(const CsnModel& model, std::span<const ad::Var> params, ad::Var image);

  const FeatureVar& features() const { return head_.features(); }
  ad::Var logits(int attribute_id) { return head_.logits(attribute_id); }
  ad::Var attention(int attribute_id) { return head_.attention(attribute_id); }

 private:
  HeadEvaluator head_;
};

ProbabilityPair predict(const CsnModel& model, const Tensor& image, int attribute_id);
AttentionMap attention_map(const CsnModel& model, const Tensor& image, int attribute_id);

// Order-sensitive FNV-1a over every parameter's bytes.
std::uint64_t parameter_checksum(const CsnModel& model);

}  // namespace csn

#endif  // CSN_MODEL_HPP_
