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

#include "csn/registry.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "csn/errors.hpp"

namespace csn {

namespace {

void check_concepts(const std::vector<Concept>& list, const char* what) {
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (list[i].id != static_cast<int>(i)) {
      throw ConfigError(std::string("registry: ") + what + " ids must be 0.." +
                        std::to_string(list.size() - 1) + " in order");
    }
  }
}

}  // namespace

ConceptRegistry::ConceptRegistry(std::vector<Concept> parts,
                                 std::vector<Concept> patterns,
                                 std::vector<AttributeSpec> attributes)
    : parts_(std::move(parts)), patterns_(std::move(patterns)) {
  check_concepts(parts_, "part");
  check_concepts(patterns_, "pattern");
  for (auto& a : attributes) add_attribute(std::move(a));
}

ConceptRegistry ConceptRegistry::full_grid(
    const std::vector<std::string>& part_names,
    const std::vector<std::string>& pattern_names) {
  std::vector<Concept> parts, patterns;
  std::vector<AttributeSpec> attrs;
  for (std::size_t i = 0; i < part_names.size(); ++i)
    parts.push_back({static_cast<int>(i), part_names[i]});
  for (std::size_t j = 0; j < pattern_names.size(); ++j)
    patterns.push_back({static_cast<int>(j), pattern_names[j]});
  for (std::size_t i = 0; i < part_names.size(); ++i)
    for (std::size_t j = 0; j < pattern_names.size(); ++j)
      attrs.push_back({static_cast<int>(i * pattern_names.size() + j),
                       static_cast<int>(i), static_cast<int>(j),
                       part_names[i] + "_" + pattern_names[j]});
  return ConceptRegistry(std::move(parts), std::move(patterns), std::move(attrs));
}

bool ConceptRegistry::contains(int attribute_id) const {
  return index_.count(attribute_id) > 0;
}

const AttributeSpec& ConceptRegistry::attribute(int attribute_id) const {
  auto it = index_.find(attribute_id);
  if (it == index_.end()) {
    throw LookupError("unknown attribute id " + std::to_string(attribute_id));
  }
  return attributes_[it->second];
}

std::optional<int> ConceptRegistry::find(int part, int pattern) const {
  for (const auto& a : attributes_)
    if (a.part == part && a.pattern == pattern) return a.id;
  return std::nullopt;
}

int ConceptRegistry::next_attribute_id() const {
  return index_.empty() ? 0 : index_.rbegin()->first + 1;
}

void ConceptRegistry::add_attribute(AttributeSpec spec) {
  if (spec.id < 0) throw ConfigError("registry: attribute ids must be non-negative");
  if (spec.part < 0 || spec.part >= static_cast<int>(parts_.size())) {
    throw ConfigError("registry: attribute " + std::to_string(spec.id) +
                      " references unknown part " + std::to_string(spec.part));
  }
  if (spec.pattern < 0 || spec.pattern >= static_cast<int>(patterns_.size())) {
    throw ConfigError("registry: attribute " + std::to_string(spec.id) +
                      " references unknown pattern " + std::to_string(spec.pattern));
  }
  if (contains(spec.id)) {
    throw ConfigError("registry: duplicate attribute id " + std::to_string(spec.id));
  }
  if (find(spec.part, spec.pattern)) {
    throw ConfigError("registry: (part " + std::to_string(spec.part) +
                      ", pattern " + std::to_string(spec.pattern) +
                      ") registered twice");
  }
  if (spec.name.empty()) {
    spec.name = parts_[spec.part].name + "_" + patterns_[spec.pattern].name;
  }
  index_[spec.id] = attributes_.size();
  attributes_.push_back(std::move(spec));
}

ConceptRegistry ConceptRegistry::without(
    const std::vector<std::pair<int, int>>& pairs) const {
  std::vector<AttributeSpec> kept;
  for (const auto& a : attributes_) {
    if (std::find(pairs.begin(), pairs.end(), std::pair{a.part, a.pattern}) ==
        pairs.end()) {
      kept.push_back(a);
    }
  }
  return ConceptRegistry(parts_, patterns_, std::move(kept));
}

void to_json(nlohmann::json& j, const ConceptRegistry& r) {
  j = nlohmann::json::object();
  auto concepts = [](const std::vector<Concept>& list) {
    auto arr = nlohmann::json::array();
    for (const auto& c : list) arr.push_back({{"id", c.id}, {"name", c.name}});
    return arr;
  };
  j["parts"] = concepts(r.parts());
  j["patterns"] = concepts(r.patterns());
  j["attributes"] = nlohmann::json::array();
  for (const auto& a : r.attributes()) {
    j["attributes"].push_back(
        {{"id", a.id}, {"part", a.part}, {"pattern", a.pattern}, {"name", a.name}});
  }
}

void from_json(const nlohmann::json& j, ConceptRegistry& r) {
  auto concepts = [](const nlohmann::json& arr) {
    std::vector<Concept> out;
    for (const auto& c : arr)
      out.push_back({c.at("id").get<int>(), c.value("name", std::string{})});
    return out;
  };
  std::vector<AttributeSpec> attrs;
  for (const auto& a : j.at("attributes")) {
    attrs.push_back({a.at("id").get<int>(), a.at("part").get<int>(),
                     a.at("pattern").get<int>(), a.value("name", std::string{})});
  }
  r = ConceptRegistry(concepts(j.at("parts")), concepts(j.at("patterns")),
                      std::move(attrs));
}

ConceptRegistry load_registry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open registry");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("registry " + path + ": " + e.what());
  }
  return j.get<ConceptRegistry>();
}

void save_registry(const ConceptRegistry& registry, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot write registry");
  out << nlohmann::json(registry).dump(2) << "\n";
}

}  // namespace csn
