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

#include "csn/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csn/errors.hpp"
#include "csn/image_io.hpp"

namespace csn {

namespace {

using nlohmann::json;

constexpr int kMaxPlacementAttempts = 1000;

enum Pattern { kSolidRed = 0, kSolidGreen = 1, kStripes = 2, kChecker = 3 };

bool shape_covers(int part, std::size_t ly, std::size_t lx, std::size_t s) {
  switch (part) {
    case 0:  // square
      return true;
    case 1: {  // disk
      const double c = static_cast<double>(s) / 2.0;
      const double dy = static_cast<double>(ly) + 0.5 - c;
      const double dx = static_cast<double>(lx) + 0.5 - c;
      return dy * dy + dx * dx <= c * c;
    }
    case 2:  // triangle: lower-left half, diagonal included
      return lx <= ly;
    case 3: {  // cross
      const std::size_t band = (s + 2) / 3;
      const std::size_t lo = (s - band) / 2;
      return (ly >= lo && ly < lo + band) || (lx >= lo && lx < lo + band);
    }
  }
  return false;
}

std::array<double, 3> pattern_color(int pattern, std::size_t ly, std::size_t lx) {
  constexpr std::array<double, 3> kRed{1, 0, 0}, kGreen{0, 1, 0}, kBlue{0, 0, 1},
      kWhite{1, 1, 1};
  switch (pattern) {
    case kSolidRed: return kRed;
    case kSolidGreen: return kGreen;
    case kStripes: return ly % 2 == 0 ? kBlue : kWhite;
    case kChecker: return (ly + lx) % 2 == 0 ? kBlue : kWhite;
  }
  return kWhite;
}

bool boxes_overlap(std::size_t ay, std::size_t ax, std::size_t by, std::size_t bx,
                   std::size_t s) {
  return ay < by + s && by < ay + s && ax < bx + s && bx < ax + s;
}

}  // namespace

const std::vector<std::string>& part_names() {
  static const std::vector<std::string> names{"square", "disk", "triangle", "cross"};
  return names;
}

const std::vector<std::string>& pattern_names() {
  static const std::vector<std::string> names{"red", "green", "stripes", "checker"};
  return names;
}

void GenConfig::validate() const {
  if (image_size == 0) throw ConfigError("gen: image_size must be positive");
  if (num_parts == 0 || num_parts > kMaxParts) {
    throw ConfigError("gen: num_parts must lie in 1.." + std::to_string(kMaxParts));
  }
  if (num_patterns == 0 || num_patterns > kMaxPatterns) {
    throw ConfigError("gen: num_patterns must lie in 1.." + std::to_string(kMaxPatterns));
  }
  if (min_parts_per_scene > max_parts_per_scene) {
    throw ConfigError("gen: parts_per_scene range is empty");
  }
  if (max_parts_per_scene > num_parts) {
    throw ConfigError("gen: max parts per scene exceeds num_parts");
  }
  if (part_size == 0 || part_size > image_size) {
    throw ConfigError("gen: part_size must lie in 1..image_size");
  }
  if (noise_amplitude < 0.0) throw ConfigError("gen: noise amplitude must be >= 0");
  const auto side = static_cast<std::size_t>(
      std::ceil(std::sqrt(static_cast<double>(max_parts_per_scene))));
  if (part_size * side > image_size) {
    throw GenerationError("gen: placing " + std::to_string(max_parts_per_scene) +
                          " parts of size " + std::to_string(part_size) + " in a " +
                          std::to_string(image_size) + "px image is infeasible (config too dense)");
  }
  for (const auto& [i, j] : holdout_attributes) {
    if (i < 0 || j < 0 || i >= static_cast<int>(num_parts) || j >= static_cast<int>(num_patterns)) {
      throw ConfigError("gen: holdout (" + std::to_string(i) + ", " + std::to_string(j) +
                        ") outside the part/pattern grid");
    }
  }
}

void GenConfig::set_uniform_cap(const ConceptRegistry& registry, std::size_t cap) {
  positives_per_attribute.clear();
  for (const auto& a : registry.attributes()) positives_per_attribute[a.id] = cap;
}

void to_json(json& j, const GenConfig& c) {
  json caps = json::object();
  for (const auto& [k, v] : c.positives_per_attribute) caps[std::to_string(k)] = v;
  json holdout = json::array();
  for (const auto& [i, p] : c.holdout_attributes) holdout.push_back({i, p});
  j = json{{"image_size", c.image_size},
           {"num_parts", c.num_parts},
           {"num_patterns", c.num_patterns},
           {"parts_per_scene", {c.min_parts_per_scene, c.max_parts_per_scene}},
           {"part_size", c.part_size},
           {"background", c.background},
           {"noise_amplitude", c.noise_amplitude},
           {"positives_per_attribute", caps},
           {"holdout_attributes", holdout}};
}

void from_json(const json& j, GenConfig& c) {
  c = GenConfig{};
  c.image_size = j.value("image_size", c.image_size);
  c.num_parts = j.value("num_parts", c.num_parts);
  c.num_patterns = j.value("num_patterns", c.num_patterns);
  if (j.contains("parts_per_scene")) {
    c.min_parts_per_scene = j.at("parts_per_scene").at(0).get<std::size_t>();
    c.max_parts_per_scene = j.at("parts_per_scene").at(1).get<std::size_t>();
  }
  c.part_size = j.value("part_size", c.part_size);
  c.background = j.value("background", c.background);
  c.noise_amplitude = j.value("noise_amplitude", c.noise_amplitude);
  if (j.contains("positives_per_attribute")) {
    const auto& caps = j.at("positives_per_attribute");
    if (caps.is_object()) {
      for (const auto& [k, v] : caps.items()) c.positives_per_attribute[std::stoi(k)] = v.get<std::size_t>();
    } else {
      for (const auto& e : caps) c.positives_per_attribute[e.at(0).get<int>()] = e.at(1).get<std::size_t>();
    }
  }
  if (j.contains("holdout_attributes")) {
    for (const auto& e : j.at("holdout_attributes"))
      c.holdout_attributes.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  }
}

ConceptRegistry default_registry(const GenConfig& config) {
  std::vector<std::string> parts(part_names().begin(),
                                 part_names().begin() + static_cast<std::ptrdiff_t>(config.num_parts));
  std::vector<std::string> patterns(
      pattern_names().begin(), pattern_names().begin() + static_cast<std::ptrdiff_t>(config.num_patterns));
  return ConceptRegistry::full_grid(parts, patterns);
}

void to_json(json& j, const SceneSpec& s) {
  j = json{{"seed", s.seed}, {"placements", json::array()}};
  for (const auto& p : s.placements)
    j["placements"].push_back({{"part", p.part}, {"pattern", p.pattern}, {"y", p.y}, {"x", p.x}});
}

void from_json(const json& j, SceneSpec& s) {
  s = SceneSpec{};
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& p : j.at("placements")) {
    s.placements.push_back({p.at("part").get<int>(), p.at("pattern").get<int>(),
                            p.at("y").get<std::size_t>(), p.at("x").get<std::size_t>()});
  }
}

SceneSpec sample_scene(const GenConfig& config, std::mt19937_64& rng) {
  config.validate();
  SceneSpec spec;
  spec.seed = rng();
  std::uniform_int_distribution<std::size_t> count_dist(config.min_parts_per_scene,
                                                        config.max_parts_per_scene);
  const std::size_t count = count_dist(rng);
  std::vector<int> parts(config.num_parts);
  std::iota(parts.begin(), parts.end(), 0);
  // Partial Fisher-Yates: first `count` entries are a uniform distinct subset.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, parts.size() - 1);
    std::swap(parts[i], parts[pick(rng)]);
  }
  std::uniform_int_distribution<int> pattern_dist(0, static_cast<int>(config.num_patterns) - 1);
  std::uniform_int_distribution<std::size_t> pos_dist(0, config.image_size - config.part_size);
  int attempts = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const int pattern = pattern_dist(rng);
    while (true) {
      if (++attempts > kMaxPlacementAttempts) {
        throw GenerationError("could not place " + std::to_string(count) +
                              " non-overlapping parts in " +
                              std::to_string(kMaxPlacementAttempts) +
                              " attempts (config too dense)");
      }
      const std::size_t y = pos_dist(rng), x = pos_dist(rng);
      const bool clash = std::any_of(spec.placements.begin(), spec.placements.end(),
                                     [&](const Placement& p) {
                                       return boxes_overlap(y, x, p.y, p.x, config.part_size);
                                     });
      if (!clash) {
        spec.placements.push_back({parts[i], pattern, y, x});
        break;
      }
    }
  }
  return spec;
}

Tensor render_scene(const SceneSpec& spec, const GenConfig& config) {
  const std::size_t S = config.image_size, s = config.part_size;
  Tensor img({3, S, S});
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> noise(-config.noise_amplitude, config.noise_amplitude);
  for (auto& v : img.mutable_data()) {
    const double n = config.noise_amplitude > 0.0 ? noise(rng) : 0.0;
    v = std::clamp(config.background + n, 0.0, 1.0);
  }
  for (const auto& p : spec.placements) {
    if (p.y + s > S || p.x + s > S) throw GenerationError("placement outside the image");
    for (std::size_t ly = 0; ly < s; ++ly)
      for (std::size_t lx = 0; lx < s; ++lx) {
        if (!shape_covers(p.part, ly, lx, s)) continue;
        const auto color = pattern_color(p.pattern, ly, lx);
        for (std::size_t c = 0; c < 3; ++c) img[(c * S + p.y + ly) * S + p.x + lx] = color[c];
      }
  }
  return img;
}

BinaryMask ground_truth_mask(const SceneSpec& spec, const GenConfig& config, int part_id) {
  if (part_id < 0 || part_id >= static_cast<int>(config.num_parts)) {
    throw LookupError("unknown part id " + std::to_string(part_id));
  }
  const std::size_t S = config.image_size, s = config.part_size;
  BinaryMask mask(S, S);
  for (const auto& p : spec.placements) {
    if (p.part != part_id) continue;
    for (std::size_t ly = 0; ly < s; ++ly)
      for (std::size_t lx = 0; lx < s; ++lx)
        if (shape_covers(p.part, ly, lx, s)) mask.at(p.y + ly, p.x + lx) = 1;
  }
  return mask;
}

BinaryMask downsample_mask(const BinaryMask& pixels, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0 || h > pixels.h || w > pixels.w) {
    throw DimensionError("downsample_mask: grid larger than the pixel mask");
  }
  BinaryMask grid(h, w);
  for (std::size_t gy = 0; gy < h; ++gy) {
    const std::size_t y0 = gy * pixels.h / h, y1 = (gy + 1) * pixels.h / h;
    for (std::size_t gx = 0; gx < w; ++gx) {
      const std::size_t x0 = gx * pixels.w / w, x1 = (gx + 1) * pixels.w / w;
      std::size_t on = 0;
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) on += pixels.at(y, x) != 0;
      grid.at(gy, gx) = 4 * on >= (y1 - y0) * (x1 - x0) ? 1 : 0;
    }
  }
  return grid;
}

BinaryMask downsample_mask(const BinaryMask& pixels, std::size_t h, std::size_t w,
                           const CellFootprint& footprint) {
  if (h == 0 || w == 0 || footprint.stride == 0 || footprint.extent == 0) {
    throw DimensionError("downsample_mask: empty grid or footprint");
  }
  if ((h - 1) * footprint.stride >= pixels.h || (w - 1) * footprint.stride >= pixels.w) {
    throw DimensionError("downsample_mask: footprint grid falls outside the pixel mask");
  }
  BinaryMask grid(h, w);
  for (std::size_t gy = 0; gy < h; ++gy) {
    const std::size_t y0 = gy * footprint.stride;
    const std::size_t y1 = std::min(pixels.h, y0 + footprint.extent);
    for (std::size_t gx = 0; gx < w; ++gx) {
      const std::size_t x0 = gx * footprint.stride;
      const std::size_t x1 = std::min(pixels.w, x0 + footprint.extent);
      std::size_t on = 0;
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) on += pixels.at(y, x) != 0;
      grid.at(gy, gx) = 4 * on >= (y1 - y0) * (x1 - x0) ? 1 : 0;
    }
  }
  return grid;
}

void to_json(json& j, const LabelRecord& r) {
  json labels = json::array();
  for (const auto& [k, y] : r.labels) labels.push_back({k, y});
  j = json{{"image", r.image}, {"labels", labels}};
}

void from_json(const json& j, LabelRecord& r) {
  r.image = j.at("image").get<std::string>();
  r.labels.clear();
  for (const auto& e : j.at("labels")) r.labels.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
}

std::vector<std::pair<int, int>> scene_labels(const SceneSpec& spec,
                                              const ConceptRegistry& registry) {
  std::vector<std::pair<int, int>> out;
  for (const auto& a : registry.attributes()) {
    const bool present = std::any_of(spec.placements.begin(), spec.placements.end(),
                                     [&](const Placement& p) {
                                       return p.part == a.part && p.pattern == a.pattern;
                                     });
    out.emplace_back(a.id, present ? 1 : 0);
  }
  return out;
}

std::string scene_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%06zu.ppm", index);
  return buf;
}

GeneratedDataset generate_scenes(const GenConfig& config, const ConceptRegistry& registry,
                                 std::size_t n_scenes, std::uint64_t seed) {
  config.validate();
  if (registry.attributes().size() > config.num_parts * config.num_patterns) {
    throw ConfigError("gen: registry has more attributes than parts x patterns");
  }
  for (const auto& a : registry.attributes()) {
    if (a.part >= static_cast<int>(config.num_parts) ||
        a.pattern >= static_cast<int>(config.num_patterns)) {
      throw ConfigError("gen: attribute " + a.name + " outside the generator's grid");
    }
  }
  GeneratedDataset ds;
  ds.config = config;
  ds.registry = registry;
  std::map<int, std::size_t> kept_positives;
  for (std::size_t i = 0; i < n_scenes; ++i) {
    std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(i));
    SceneSpec spec = sample_scene(config, rng);
    ds.images.push_back(quantize(render_scene(spec, config)));
    const auto labels = scene_labels(spec, registry);
    LabelRecord eval{scene_file_name(i), labels};
    LabelRecord train{scene_file_name(i), {}};
    for (const auto& [k, y] : labels) {
      const auto& a = registry.attribute(k);
      if (std::find(config.holdout_attributes.begin(), config.holdout_attributes.end(),
                    std::pair{a.part, a.pattern}) != config.holdout_attributes.end()) {
        continue;
      }
      if (y == 1) {
        auto cap = config.positives_per_attribute.find(k);
        if (cap != config.positives_per_attribute.end() && kept_positives[k] >= cap->second) {
          continue;
        }
        ++kept_positives[k];
      }
      train.labels.emplace_back(k, y);
    }
    ds.specs.push_back(std::move(spec));
    ds.train_records.push_back(std::move(train));
    ds.eval_records.push_back(std::move(eval));
  }
  return ds;
}

std::string encode_jsonl(const std::vector<LabelRecord>& records) {
  std::string out;
  for (const auto& r : records) out += json(r).dump() + "\n";
  return out;
}

std::vector<LabelRecord> decode_jsonl(const std::string& text) {
  std::vector<LabelRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      try {
        out.push_back(json::parse(line).get<LabelRecord>());
      } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest line: ") + e.what(), offset);
      }
    }
    offset += line.size() + 1;
  }
  return out;
}

void write_dataset(const GeneratedDataset& ds, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir, "cannot create output directory");
  const fs::path dir(out_dir);
  for (std::size_t i = 0; i < ds.images.size(); ++i)
    write_ppm((dir / scene_file_name(i)).string(), ds.images[i]);
  write_file((dir / "train.jsonl").string(), encode_jsonl(ds.train_records));
  write_file((dir / "eval.jsonl").string(), encode_jsonl(ds.eval_records));
  std::string specs;
  for (std::size_t i = 0; i < ds.specs.size(); ++i) {
    json j = ds.specs[i];
    j["image"] = scene_file_name(i);
    specs += j.dump() + "\n";
  }
  write_file((dir / "specs.jsonl").string(), specs);
  write_file((dir / "registry.json").string(), json(ds.registry).dump(2) + "\n");
  write_file((dir / "gen_config.json").string(), json(ds.config).dump(2) + "\n");
}

GeneratedDataset generate_dataset(const GenConfig& config, const ConceptRegistry& registry,
                                  std::size_t n_scenes, std::uint64_t seed,
                                  const std::string& out_dir) {
  GeneratedDataset ds = generate_scenes(config, registry, n_scenes, seed);
  write_dataset(ds, out_dir);
  return ds;
}

TrainingSet to_training_set(const std::vector<Tensor>& images,
                            const std::vector<LabelRecord>& records) {
  if (images.size() != records.size()) {
    throw DimensionError("to_training_set: one record per image required");
  }
  TrainingSet set;
  set.images = images;
  for (std::size_t i = 0; i < records.size(); ++i)
    for (const auto& [k, y] : records[i].labels) set.examples.push_back({i, k, y});
  return set;
}

LoadedDataset load_dataset(const std::string& dir, const std::string& manifest) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  LoadedDataset ds;
  ds.registry = load_registry((root / "registry.json").string());
  if (fs::exists(root / "gen_config.json")) {
    try {
      ds.config = json::parse(read_file((root / "gen_config.json").string())).get<GenConfig>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("gen_config.json: ") + e.what());
    }
  }
  ds.records = decode_jsonl(read_file((root / manifest).string()));
  std::map<std::string, SceneSpec> specs;
  if (fs::exists(root / "specs.jsonl")) {
    std::istringstream in(read_file((root / "specs.jsonl").string()));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      specs[j.at("image").get<std::string>()] = j.get<SceneSpec>();
    }
  }
  for (const auto& r : ds.records) {
    ds.image_names.push_back(r.image);
    ds.images.push_back(read_ppm((root / r.image).string()));
    if (!specs.empty()) {
      auto it = specs.find(r.image);
      if (it == specs.end()) throw LookupError("no scene spec for " + r.image);
      ds.specs.push_back(it->second);
    }
  }
  return ds;
}

}  // namespace csn
