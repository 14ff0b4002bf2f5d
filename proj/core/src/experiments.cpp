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

#include "csn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <thread>

#include "csn/errors.hpp"
#include "csn/head.hpp"
#include "csn/metrics.hpp"

namespace csn {

using nlohmann::json;

namespace {

// Runs fn(0..n-1) on up to `threads` workers. Results are keyed by index, so
// the outcome does not depend on scheduling.
void run_indexed(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::pair<double, double> mean_stdev(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {m, 0.0};
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<double>(xs.size() - 1))};
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

json holdout_json(const std::vector<std::pair<int, int>>& holdout) {
  json arr = json::array();
  for (const auto& [i, j] : holdout) arr.push_back({i, j});
  return arr;
}

struct SplitData {
  GeneratedDataset train;
  GeneratedDataset test;
};

SplitData make_split(const ExperimentConfig& config, const GenConfig& gen,
                     const ConceptRegistry& registry, std::uint64_t seed) {
  GenConfig test_gen = config.gen;
  test_gen.positives_per_attribute.clear();
  test_gen.holdout_attributes.clear();
  return {generate_scenes(gen, registry, config.n_train, seed),
          generate_scenes(test_gen, registry, config.n_test, test_split_seed(seed))};
}

TrainResult fit(const ExperimentConfig& config, const ConceptRegistry& registry,
                SharingMode mode, const GeneratedDataset& data, std::uint64_t seed) {
  TrainConfig tc = config.train;
  tc.sharing_mode = mode;
  tc.seed = seed;
  CsnModel model = make_model(config.backbone, registry, mode, seed, tc.soft_init,
                              tc.classifier_bias);
  return train(std::move(model), to_training_set(data.images, data.train_records), tc);
}

}  // namespace

const AttributeEval* EvalReport::find(int attribute_id) const {
  for (const auto& a : attributes)
    if (a.attribute == attribute_id) return &a;
  return nullptr;
}

EvalReport evaluate_model(const CsnModel& model, const std::vector<Tensor>& images,
                          const std::vector<LabelRecord>& records,
                          const std::vector<SceneSpec>& specs, const GenConfig& gen,
                          std::vector<int> attribute_ids) {
  if (images.size() != records.size()) {
    throw DimensionError("evaluate_model: one label record per image required");
  }
  if (!specs.empty() && specs.size() != images.size()) {
    throw DimensionError("evaluate_model: one scene spec per image required");
  }
  if (attribute_ids.empty())
    for (const auto& a : model.registry.attributes()) attribute_ids.push_back(a.id);
  for (int k : attribute_ids) (void)model.registry.attribute(k);

  const std::size_t grid = model.backbone_config.grid_size();
  const CellFootprint footprint = model.backbone_config.cell_footprint();
  double coverage_sum = 0.0;
  std::size_t coverage_n = 0;
  EvalReport report;
  std::map<int, RankedPredictions> preds;
  std::map<int, std::vector<double>> masses;
  for (std::size_t i = 0; i < images.size(); ++i) {
    ad::Tape tape;
    auto vars = bind_parameters(tape, model, false);
    ModelGraph graph(model, vars, tape.constant(images[i], "image"));
    std::map<int, int> labels(records[i].labels.begin(), records[i].labels.end());
    for (int k : attribute_ids) {
      auto it = labels.find(k);
      if (it == labels.end()) continue;
      const double p_pos = probabilities_from_logits(graph.logits(k).value()).p_pos;
      preds[k].add(p_pos, it->second);
      if (it->second == 1 && !specs.empty()) {
        const int part = model.registry.attribute(k).part;
        BinaryMask cells =
            downsample_mask(ground_truth_mask(specs[i], gen, part), grid, grid, footprint);
        if (cells.count() == 0) continue;  // part outside every receptive field
        const double coverage = static_cast<double>(cells.count()) / (grid * grid);
        coverage_sum += coverage;
        ++coverage_n;
        report.max_mask_coverage = std::max(report.max_mask_coverage, coverage);
        AttentionMap att{graph.attention(k).value(), grid, grid};
        masses[k].push_back(localization_mass(att, cells));
      }
    }
  }

  std::vector<double> aps, locs, prevs;
  for (int k : attribute_ids) {
    AttributeEval e;
    e.attribute = k;
    e.name = model.registry.attribute(k).name;
    const auto& p = preds[k];
    e.examples = p.size();
    e.positives = p.positives();
    if (e.examples > 0) e.prevalence = prevalence(p.labels);
    if (e.positives > 0) {
      e.ap = average_precision(p);
      aps.push_back(*e.ap);
      prevs.push_back(e.prevalence);
    }
    if (!masses[k].empty()) {
      e.localization = mean_stdev(masses[k]).first;
      locs.push_back(*e.localization);
    }
    report.attributes.push_back(std::move(e));
  }
  report.mean_ap = mean_stdev(aps).first;
  report.mean_localization = mean_stdev(locs).first;
  report.mean_prevalence = mean_stdev(prevs).first;
  if (coverage_n > 0) report.mean_mask_coverage = coverage_sum / coverage_n;
  report.metadata = json::object();
  report.metadata["sharing_mode"] = to_string(model.head.mode);
  return report;
}

std::string Arm::label() const {
  return to_string(sharing_mode) + "@" +
         (positives_cap ? std::to_string(*positives_cap) : std::string("all"));
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"gen", c.gen},        {"backbone", c.backbone}, {"train", c.train},
           {"n_train", c.n_train}, {"n_test", c.n_test},     {"seeds", c.seeds},
           {"arms", json::array()}, {"holdout", holdout_json(c.holdout)},
           {"threads", c.threads}};
  for (const auto& a : c.arms) {
    json ja{{"sharing_mode", to_string(a.sharing_mode)}};
    ja["cap"] = a.positives_cap ? json(*a.positives_cap) : json(nullptr);
    j["arms"].push_back(ja);
  }
}

void from_json(const json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  if (j.contains("gen")) c.gen = j.at("gen").get<GenConfig>();
  if (j.contains("backbone")) c.backbone = j.at("backbone").get<BackboneConfig>();
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  c.n_train = j.value("n_train", c.n_train);
  c.n_test = j.value("n_test", c.n_test);
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("arms")) {
    for (const auto& ja : j.at("arms")) {
      Arm a;
      a.sharing_mode = parse_sharing_mode(ja.at("sharing_mode").get<std::string>());
      if (ja.contains("cap") && !ja.at("cap").is_null()) a.positives_cap = ja.at("cap").get<std::size_t>();
      c.arms.push_back(a);
    }
  }
  if (j.contains("holdout"))
    for (const auto& e : j.at("holdout")) c.holdout.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  c.threads = j.value("threads", c.threads);
}

std::uint64_t test_split_seed(std::uint64_t seed) { return seed ^ (std::uint64_t{1} << 40); }

AblationReport run_ablation(const ExperimentConfig& config) {
  if (config.arms.empty()) throw ConfigError("ablation: no arms given");
  if (config.seeds.empty()) throw ConfigError("ablation: no seeds given");
  const ConceptRegistry registry = default_registry(config.gen);
  const std::size_t n_jobs = config.arms.size() * config.seeds.size();
  std::vector<EvalReport> results(n_jobs);
  run_indexed(n_jobs, config.threads, [&](std::size_t job) {
    const Arm& arm = config.arms[job / config.seeds.size()];
    const std::uint64_t seed = config.seeds[job % config.seeds.size()];
    GenConfig gen = config.gen;
    if (arm.positives_cap) gen.set_uniform_cap(registry, *arm.positives_cap);
    SplitData split = make_split(config, gen, registry, seed);
    TrainResult trained = fit(config, registry, arm.sharing_mode, split.train, seed);
    EvalReport rep = evaluate_model(trained.model, split.test.images, split.test.eval_records,
                                    split.test.specs, config.gen);
    rep.metadata["arm"] = arm.label();
    rep.metadata["cap"] = arm.positives_cap ? json(*arm.positives_cap) : json(nullptr);
    rep.metadata["seed"] = seed;
    rep.metadata["final_train_loss"] =
        trained.history.empty() ? 0.0 : trained.history.back().mean_loss;
    results[job] = std::move(rep);
  });

  AblationReport report;
  for (std::size_t a = 0; a < config.arms.size(); ++a) {
    ArmSummary s;
    s.arm = config.arms[a];
    std::vector<double> aps, locs;
    for (std::size_t si = 0; si < config.seeds.size(); ++si) {
      s.runs.push_back(results[a * config.seeds.size() + si]);
      aps.push_back(s.runs.back().mean_ap);
      locs.push_back(s.runs.back().mean_localization);
    }
    std::tie(s.mean_ap, s.stdev_ap) = mean_stdev(aps);
    std::tie(s.mean_localization, s.stdev_localization) = mean_stdev(locs);
    report.arms.push_back(std::move(s));
  }
  report.metadata = config;
  return report;
}

void check_zero_shot_coverage(const ConceptRegistry& registry,
                              const std::vector<std::pair<int, int>>& holdout) {
  const ConceptRegistry remaining = registry.without(holdout);
  for (const auto& [i, j] : holdout) {
    if (!registry.find(i, j)) {
      throw CompositionError("holdout (" + std::to_string(i) + ", " + std::to_string(j) +
                             ") is not a registered attribute");
    }
    bool part = false, pattern = false;
    for (const auto& a : remaining.attributes()) {
      part = part || a.part == i;
      pattern = pattern || a.pattern == j;
    }
    if (!part || !pattern) {
      throw CompositionError("holdout (" + std::to_string(i) + ", " + std::to_string(j) +
                             ") leaves " + (!part ? "part " + std::to_string(i) : "") +
                             (!part && !pattern ? " and " : "") +
                             (!pattern ? "pattern " + std::to_string(j) : "") +
                             " without training coverage");
    }
  }
}

ZeroShotReport run_zero_shot(const ExperimentConfig& config) {
  if (config.seeds.empty()) throw ConfigError("zero-shot: no seeds given");
  const ConceptRegistry full = default_registry(config.gen);
  check_zero_shot_coverage(full, config.holdout);
  const ConceptRegistry trained_registry = full.without(config.holdout);

  const std::size_t n_seeds = config.seeds.size();
  std::vector<std::vector<ZeroShotEntry>> composed(n_seeds);
  std::vector<EvalReport> supervised(n_seeds);
  // Jobs [0, n) train the composed model, [n, 2n) the supervised reference.
  run_indexed(2 * n_seeds, config.threads, [&](std::size_t job) {
    const std::uint64_t seed = config.seeds[job % n_seeds];
    if (job >= n_seeds) {
      GenConfig gen = config.gen;
      gen.holdout_attributes.clear();
      SplitData split = make_split(config, gen, full, seed);
      TrainResult ref = fit(config, full, SharingMode::kNone, split.train, seed);
      EvalReport rep = evaluate_model(ref.model, split.test.images, split.test.eval_records,
                                      split.test.specs, config.gen);
      rep.metadata["seed"] = seed;
      rep.metadata["role"] = "supervised";
      supervised[job - n_seeds] = std::move(rep);
      return;
    }
    if (config.holdout.empty()) return;
    GenConfig gen = config.gen;
    gen.holdout_attributes = config.holdout;
    SplitData split = make_split(config, gen, full, seed);
    TrainResult zs = fit(config, trained_registry, SharingMode::kPartAndPattern, split.train, seed);
    std::vector<int> ids;
    for (const auto& [i, j] : config.holdout) {
      const int id = *full.find(i, j);
      compose_zero_shot(zs.model.registry, zs.model.head, i, j, id, full.attribute(id).name);
      ids.push_back(id);
    }
    EvalReport rep = evaluate_model(zs.model, split.test.images, split.test.eval_records,
                                    split.test.specs, config.gen, ids);
    for (const auto& e : rep.attributes) {
      ZeroShotEntry z;
      z.attribute = e.attribute;
      z.name = e.name;
      z.seed = seed;
      z.composed_ap = e.ap.value_or(0.0);
      z.prevalence = e.prevalence;
      composed[job].push_back(z);
    }
  });

  ZeroShotReport report;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    for (auto z : composed[s]) {
      if (const AttributeEval* ref = supervised[s].find(z.attribute)) {
        z.supervised_ap = ref->ap.value_or(0.0);
      }
      report.composed.push_back(z);
    }
  }
  report.supervised = std::move(supervised);
  report.metadata = config;
  report.metadata["supervised_reference"] =
      "no-sharing model co-trained on every attribute without holdout";
  return report;
}

json report_json(const EvalReport& r) {
  json j{{"mean_ap", r.mean_ap},
         {"mean_localization", r.mean_localization},
         {"mean_prevalence", r.mean_prevalence},
         {"mean_mask_coverage", r.mean_mask_coverage},
         {"max_mask_coverage", r.max_mask_coverage},
         {"metadata", r.metadata},
         {"attributes", json::array()}};
  for (const auto& a : r.attributes) {
    j["attributes"].push_back({{"id", a.attribute},
                               {"name", a.name},
                               {"examples", a.examples},
                               {"positives", a.positives},
                               {"prevalence", a.prevalence},
                               {"ap", a.ap ? json(*a.ap) : json(nullptr)},
                               {"localization", a.localization ? json(*a.localization) : json(nullptr)}});
  }
  return j;
}

json report_json(const AblationReport& r) {
  json j{{"metadata", r.metadata}, {"arms", json::array()}};
  for (const auto& s : r.arms) {
    json runs = json::array();
    for (const auto& run : s.runs) runs.push_back(report_json(run));
    j["arms"].push_back({{"arm", s.arm.label()},
                         {"sharing_mode", to_string(s.arm.sharing_mode)},
                         {"cap", s.arm.positives_cap ? json(*s.arm.positives_cap) : json(nullptr)},
                         {"mean_ap", s.mean_ap},
                         {"stdev_ap", s.stdev_ap},
                         {"mean_localization", s.mean_localization},
                         {"stdev_localization", s.stdev_localization},
                         {"runs", runs}});
  }
  return j;
}

json report_json(const ZeroShotReport& r) {
  json j{{"metadata", r.metadata}, {"composed", json::array()}, {"supervised", json::array()}};
  for (const auto& z : r.composed) {
    j["composed"].push_back({{"id", z.attribute},
                             {"name", z.name},
                             {"seed", z.seed},
                             {"composed_ap", z.composed_ap},
                             {"supervised_ap", z.supervised_ap},
                             {"prevalence", z.prevalence}});
  }
  for (const auto& s : r.supervised) j["supervised"].push_back(report_json(s));
  return j;
}

std::string report_text(const EvalReport& r) {
  std::string out = pad("id", 5) + pad("attribute", 20) + pad("pos", 6) + pad("prev", 9) +
                    pad("AP", 9) + "loc\n";
  for (const auto& a : r.attributes) {
    out += pad(std::to_string(a.attribute), 5) + pad(a.name, 20) +
           pad(std::to_string(a.positives), 6) + pad(fmt(a.prevalence), 9) +
           pad(a.ap ? fmt(*a.ap) : "-", 9) + (a.localization ? fmt(*a.localization) : "-") + "\n";
  }
  out += "mean AP " + fmt(r.mean_ap) + "  mean localization " + fmt(r.mean_localization) +
         "  mean prevalence " + fmt(r.mean_prevalence) + "\n";
  return out;
}

std::string report_text(const AblationReport& r) {
  std::string out = pad("arm", 26) + pad("mean AP", 20) + "localization\n";
  for (const auto& s : r.arms) {
    out += pad(s.arm.label(), 26) + pad(fmt(s.mean_ap) + " +- " + fmt(s.stdev_ap), 20) +
           fmt(s.mean_localization) + " +- " + fmt(s.stdev_localization) + "\n";
  }
  return out;
}

std::string report_text(const ZeroShotReport& r) {
  std::string out = pad("attribute", 20) + pad("seed", 8) + pad("composed", 11) +
                    pad("supervised", 12) + "prevalence\n";
  for (const auto& z : r.composed) {
    out += pad(z.name, 20) + pad(std::to_string(z.seed), 8) + pad(fmt(z.composed_ap), 11) +
           pad(fmt(z.supervised_ap), 12) + fmt(z.prevalence) + "\n";
  }
  for (const auto& s : r.supervised) {
    out += "supervised seed " + s.metadata.value("seed", json(0)).dump() + ": mean AP " +
           fmt(s.mean_ap) + "\n";
  }
  return out;
}

}  // namespace csn
