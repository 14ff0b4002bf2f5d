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

#ifndef CSN_REGISTRY_HPP_
#define CSN_REGISTRY_HPP_

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace csn {

struct Concept {
  int id = 0;
  std::string name;
};

// Attribute k = (part i, pattern j).
struct AttributeSpec {
  int id = 0;
  int part = 0;
  int pattern = 0;
  std::string name;
};

// Part and pattern ids equal their list position. Attribute ids are unique
// and non-negative but need not be contiguous, so a registry with some
// attributes withheld keeps the ids of the full one.
class ConceptRegistry {
 public:
  ConceptRegistry() = default;
  ConceptRegistry(std::vector<Concept> parts, std::vector<Concept> patterns,
                  std::vector<AttributeSpec> attributes);

  // P x M registry with attribute id = part * M + pattern.
  static ConceptRegistry full_grid(const std::vector<std::string>& part_names,
                                   const std::vector<std::string>& pattern_names);

  const std::vector<Concept>& parts() const { return parts_; }
  const std::vector<Concept>& patterns() const { return patterns_; }
  const std::vector<AttributeSpec>& attributes() const { return attributes_; }
  std::size_t num_parts() const { return parts_.size(); }
  std::size_t num_patterns() const { return patterns_.size(); }

  bool contains(int attribute_id) const;
  // Throws LookupError for unknown ids.
  const AttributeSpec& attribute(int attribute_id) const;
  std::optional<int> find(int part, int pattern) const;
  int next_attribute_id() const;

  // Validates ids and the (part, pattern) uniqueness invariant.
  void add_attribute(AttributeSpec spec);
  // Registry without the given (part, pattern) pairs.
  ConceptRegistry without(const std::vector<std::pair<int, int>>& pairs) const;

 private:
  std::vector<Concept> parts_;
  std::vector<Concept> patterns_;
  std::vector<AttributeSpec> attributes_;
  std::map<int, std::size_t> index_;
};

void to_json(nlohmann::json& j, const ConceptRegistry& r);
void from_json(const nlohmann::json& j, ConceptRegistry& r);

ConceptRegistry load_registry(const std::string& path);
void save_registry(const ConceptRegistry& registry, const std::string& path);

}  // namespace csn

#endif  // CSN_REGISTRY_HPP_
