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

#ifndef CSN_SYNTHGEN_HPP_
#define CSN_SYNTHGEN_HPP_

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "csn/mask.hpp"
#include "csn/registry.hpp"
#include "csn/tensor.hpp"
#include "csn/training.hpp"

// Procedural part/pattern scenes. Parts are shapes (square, disk, triangle,
// cross); patterns are fills (solid red, solid green, blue stripes, blue
// checker), so part identity and pattern identity are visually orthogonal.
namespace csn {

inline constexpr std::size_t kMaxParts = 4;
inline constexpr std::size_t kMaxPatterns = 4;

const std::vector<std::string>& part_names();
const std::vector<std::string>& pattern_names();

struct GenConfig {
  std::size_t image_size = 32;
  std::size_t num_parts = 4;
  std::size_t num_patterns = 4;
  std::size_t min_parts_per_scene = 2;
  std::size_t max_parts_per_scene = 3;
  std::size_t part_size = 7;
  double background = 0.5;
  double noise_amplitude = 0.05;
  // attribute id -> max retained positive labels in the training manifest
  std::map<int, std::size_t> positives_per_attribute;
  // (part, pattern) pairs withheld from the training manifest
  std::vector<std::pair<int, int>> holdout_attributes;

  // ConfigError for malformed values; GenerationError when placement is
  // infeasible (part_size * ceil(sqrt(max parts)) > image_size).
  void validate() const;
  void set_uniform_cap(const ConceptRegistry& registry, std::size_t cap);
};

void to_json(nlohmann::json& j, const GenConfig& c);
void from_json(const nlohmann::json& j, GenConfig& c);

// Registry with every (shape, fill) pair of the config.
ConceptRegistry default_registry(const GenConfig& config);

struct Placement {
  int part = 0;
  int pattern = 0;
  std::size_t y = 0;  // top-left pixel
  std::size_t x = 0;
  friend bool operator==(const Placement&, const Placement&) = default;
};

struct SceneSpec {
  std::vector<Placement> placements;
  std::uint64_t seed = 0;  // background noise stream
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

void to_json(nlohmann::json& j, const SceneSpec& s);
void from_json(const nlohmann::json& j, SceneSpec& s);

// Distinct parts, independent patterns, rejection-sampled non-overlapping
// boxes. Throws GenerationError after 1000 failed position draws.
SceneSpec sample_scene(const GenConfig& config, std::mt19937_64& rng);

// 3 x S x S in [0, 1].
Tensor render_scene(const SceneSpec& spec, const GenConfig& config);

// S x S pixel mask of `part_id` (empty when the part is absent).
BinaryMask ground_truth_mask(const SceneSpec& spec, const GenConfig& config, int part_id);
// Cell (gy, gx) covers pixel rows [gy*S/h, (gy+1)*S/h) and the matching
// columns; it is marked when at least 25% of those pixels are set.
BinaryMask downsample_mask(const BinaryMask& pixels, std::size_t h, std::size_t w);
// Same rule over overlapping windows, e.g. a backbone's receptive fields.
BinaryMask downsample_mask(const BinaryMask& pixels, std::size_t h, std::size_t w,
                           const CellFootprint& footprint);

struct LabelRecord {
  std::string image;
  std::vector<std::pair<int, int>> labels;  // (attribute id, label)
};

void to_json(nlohmann::json& j, const LabelRecord& r);
void from_json(const nlohmann::json& j, LabelRecord& r);

// label(i, j) = 1 iff the scene has part i drawn with pattern j.
std::vector<std::pair<int, int>> scene_labels(const SceneSpec& spec,
                                              const ConceptRegistry& registry);

struct GeneratedDataset {
  GenConfig config;
  ConceptRegistry registry;
  std::vector<SceneSpec> specs;
  std::vector<Tensor> images;  // quantized to 8-bit levels
  std::vector<LabelRecord> train_records;  // caps and holdouts applied
  std::vector<LabelRecord> eval_records;   // full labels
};

std::string scene_file_name(std::size_t index);

// Scene i is drawn from a generator seeded with seed ^ i.
GeneratedDataset generate_scenes(const GenConfig& config, const ConceptRegistry& registry,
                                 std::size_t n_scenes, std::uint64_t seed);

// Writes scene_XXXXXX.ppm files, train.jsonl, eval.jsonl, specs.jsonl,
// registry.json and gen_config.json into out_dir (created if missing).
void write_dataset(const GeneratedDataset& dataset, const std::string& out_dir);

GeneratedDataset generate_dataset(const GenConfig& config, const ConceptRegistry& registry,
                                  std::size_t n_scenes, std::uint64_t seed,
                                  const std::string& out_dir);

TrainingSet to_training_set(const std::vector<Tensor>& images,
                            const std::vector<LabelRecord>& records);

struct LoadedDataset {
  ConceptRegistry registry;
  std::vector<std::string> image_names;
  std::vector<Tensor> images;
  std::vector<LabelRecord> records;
  std::vector<SceneSpec> specs;  // empty when specs.jsonl is absent
  GenConfig config;
};

// `manifest` is "train.jsonl" or "eval.jsonl".
LoadedDataset load_dataset(const std::string& dir, const std::string& manifest);

std::string encode_jsonl(const std::vector<LabelRecord>& records);
std::vector<LabelRecord> decode_jsonl(const std::string& text);

}  // namespace csn

#endif  // CSN_SYNTHGEN_HPP_
