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

#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "csn/checkpoint.hpp"
#include "csn/errors.hpp"
#include "csn/experiments.hpp"
#include "csn/heatmap.hpp"
#include "csn/image_io.hpp"
#include "csn/registry.hpp"
#include "csn/synthgen.hpp"
#include "csn/training.hpp"

namespace csn::cli {
namespace {

using nlohmann::json;

// Experiment config plus the gen-only fields.
struct RunConfig {
  ExperimentConfig experiment;
  json train_section = json::object();  // as written, for merging over a checkpoint
  std::optional<std::string> registry_path;
  std::size_t n_scenes = 600;
};

RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": expected a JSON object");
  try {
    rc.experiment = j.get<ExperimentConfig>();
    if (j.contains("train")) rc.train_section = j.at("train");
    if (j.contains("registry")) rc.registry_path = j.at("registry").get<std::string>();
    rc.n_scenes = j.value("n_scenes", rc.n_scenes);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return rc;
}

std::pair<int, int> parse_pair(const std::string& text) {
  const auto sep = text.find_first_of(":,");
  if (sep == std::string::npos) throw ConfigError("expected PART:PATTERN, got '" + text + "'");
  try {
    std::size_t a = 0, b = 0;
    const int part = std::stoi(text.substr(0, sep), &a);
    const int pattern = std::stoi(text.substr(sep + 1), &b);
    if (a != sep || b != text.size() - sep - 1) throw std::invalid_argument(text);
    return {part, pattern};
  } catch (const std::logic_error&) {
    throw ConfigError("expected PART:PATTERN, got '" + text + "'");
  }
}

std::size_t env_threads(std::size_t fallback) {
  const char* v = std::getenv("CSN_THREADS");
  if (!v || !*v) return fallback;
  try {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used == std::string(v).size() && n > 0) return static_cast<std::size_t>(n);
  } catch (const std::logic_error&) {
  }
  throw ConfigError(std::string("CSN_THREADS must be a positive integer, got '") + v + "'");
}

void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(parent, ec);
  if (ec) throw IoError(parent.string(), ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  write_file(path, text);
}

json history_json(const std::vector<EpochRecord>& history) {
  json out = json::array();
  for (const auto& h : history) {
    json ap = json::object();
    for (const auto& [k, v] : h.validation_ap) ap[std::to_string(k)] = v;
    out.push_back({{"epoch", h.epoch},
                   {"learning_rate", h.learning_rate},
                   {"mean_loss", h.mean_loss},
                   {"validation_ap", ap}});
  }
  return out;
}

double mean_of(const std::map<int, double>& m) {
  if (m.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [k, v] : m) s += v;
  return s / static_cast<double>(m.size());
}

// -- options ------------------------------------------------------------------

struct GenArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  std::size_t scenes = 0;
  std::size_t cap = 0;
  std::vector<std::string> holdout;
};

struct TrainArgs {
  std::string config, data, out, resume, history;
  std::uint64_t seed = 0;
  int epochs = 0, batch_size = 0;
  double lr = 0.0;
  std::string sharing_mode, optimizer, soft_init;
  bool no_bias = false;
};

struct EvalArgs {
  std::string checkpoint, data, manifest = "eval.jsonl", out, text;
  std::uint64_t seed = 0;
  std::vector<std::string> compose;
};

struct StudyArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::vector<std::string> holdout;
};

struct HeatmapArgs {
  std::string checkpoint, image, out, upsampled, raw_json;
  int attribute = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> compose;
};

// -- commands -----------------------------------------------------------------

void cmd_gen(const GenArgs& a, const CLI::App& sub, std::ostream& out) {
  RunConfig rc = load_run_config(a.config);
  GenConfig gen = rc.experiment.gen;
  for (const auto& h : a.holdout) gen.holdout_attributes.push_back(parse_pair(h));
  const ConceptRegistry registry =
      rc.registry_path ? load_registry(*rc.registry_path) : default_registry(gen);
  if (sub.count("--cap")) gen.set_uniform_cap(registry, a.cap);
  const std::size_t n = sub.count("--scenes") ? a.scenes : rc.n_scenes;
  const GeneratedDataset ds = generate_dataset(gen, registry, n, a.seed, a.out);
  out << "wrote " << ds.images.size() << " scenes and " << registry.attributes().size()
      << " attributes to " << a.out << "\n";
}

void cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out) {
  RunConfig rc = load_run_config(a.config);
  const LoadedDataset ds = load_dataset(a.data, "train.jsonl");

  std::optional<Checkpoint> resumed;
  json merged = rc.experiment.train;
  if (!a.resume.empty()) {
    resumed = load_checkpoint(a.resume);
    merged = resumed->train_config ? json(*resumed->train_config) : json(TrainConfig{});
    merged.update(rc.train_section);
  }
  TrainConfig tc = merged.get<TrainConfig>();
  if (sub.count("--seed")) tc.seed = a.seed;
  if (sub.count("--epochs")) tc.epochs = a.epochs;
  if (sub.count("--lr")) tc.learning_rate = a.lr;
  if (sub.count("--batch-size")) tc.batch_size = a.batch_size;
  if (sub.count("--sharing-mode")) tc.sharing_mode = parse_sharing_mode(a.sharing_mode);
  if (sub.count("--optimizer")) tc.optimizer = parse_optimizer(a.optimizer);
  if (sub.count("--soft-init")) tc.soft_init = parse_soft_init(a.soft_init);
  if (a.no_bias) tc.classifier_bias = false;
  tc.validate();

  CsnModel model = resumed ? resumed->model
                           : make_model(rc.experiment.backbone, ds.registry, tc.sharing_mode,
                                        tc.seed, tc.soft_init, tc.classifier_bias);
  std::optional<TrainState> state;
  if (resumed) state = resumed->state;
  TrainResult res = train(std::move(model), to_training_set(ds.images, ds.records), tc, state);

  ensure_parent(a.out);
  save_checkpoint(a.out, res.model, res.state, &tc);
  for (const auto& h : res.history) {
    out << "epoch " << h.epoch << "  lr " << h.learning_rate << "  loss " << h.mean_loss
        << "  val AP " << mean_of(h.validation_ap) << "\n";
  }
  if (!a.history.empty()) write_text(a.history, history_json(res.history).dump(2) + "\n");
  out << "checkpoint " << a.out << " at epoch " << res.state.epoch << "\n";
}

void compose_all(CsnModel& model, const std::vector<std::string>& pairs) {
  for (const auto& p : pairs) {
    const auto [part, pattern] = parse_pair(p);
    compose_zero_shot(model.registry, model.head, part, pattern);
  }
}

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  Checkpoint ck = load_checkpoint(a.checkpoint);
  compose_all(ck.model, a.compose);
  const LoadedDataset ds = load_dataset(a.data, a.manifest);
  EvalReport rep = evaluate_model(ck.model, ds.images, ds.records, ds.specs, ds.config);
  rep.metadata["checkpoint"] = a.checkpoint;
  rep.metadata["manifest"] = a.manifest;
  rep.metadata["epoch"] = ck.state.epoch;
  const std::string text = report_text(rep);
  if (!a.out.empty()) write_text(a.out, report_json(rep).dump(2) + "\n");
  if (!a.text.empty()) write_text(a.text, text);
  out << text;
}

void apply_study_overrides(ExperimentConfig& c, const StudyArgs& a, const CLI::App& sub) {
  if (sub.count("--seed")) {
    const std::size_t n = c.seeds.empty() ? 1 : c.seeds.size();
    c.seeds.clear();
    for (std::size_t i = 0; i < n; ++i) c.seeds.push_back(a.seed + i);
  }
  c.threads = env_threads(c.threads);
  if (sub.count("--threads")) c.threads = a.threads;
  if (c.threads == 0) throw ConfigError("threads must be positive");
}

void cmd_ablate(const StudyArgs& a, const CLI::App& sub, std::ostream& out) {
  ExperimentConfig c = load_run_config(a.config).experiment;
  if (c.arms.empty()) {
    for (std::size_t cap : {std::size_t{20}, std::size_t{200}})
      for (SharingMode m : {SharingMode::kNone, SharingMode::kPartOnly, SharingMode::kPartAndPattern})
        c.arms.push_back({m, cap});
  }
  apply_study_overrides(c, a, sub);
  const AblationReport rep = run_ablation(c);
  const std::string text = report_text(rep);
  write_text((std::filesystem::path(a.out) / "ablation.json").string(),
             report_json(rep).dump(2) + "\n");
  write_text((std::filesystem::path(a.out) / "ablation.txt").string(), text);
  out << text;
}

void cmd_zeroshot(const StudyArgs& a, const CLI::App& sub, std::ostream& out) {
  ExperimentConfig c = load_run_config(a.config).experiment;
  if (!a.holdout.empty()) c.holdout.clear();
  for (const auto& h : a.holdout) c.holdout.push_back(parse_pair(h));
  if (c.holdout.empty()) c.holdout = {{0, 1}, {2, 3}};
  apply_study_overrides(c, a, sub);
  const ZeroShotReport rep = run_zero_shot(c);
  const std::string text = report_text(rep);
  write_text((std::filesystem::path(a.out) / "zeroshot.json").string(),
             report_json(rep).dump(2) + "\n");
  write_text((std::filesystem::path(a.out) / "zeroshot.txt").string(), text);
  out << text;
}

void cmd_heatmap(const HeatmapArgs& a, std::ostream& out) {
  Checkpoint ck = load_checkpoint(a.checkpoint);
  compose_all(ck.model, a.compose);
  const Tensor image = read_ppm(a.image);
  HeatmapOutputs paths{a.out, std::nullopt, std::nullopt};
  if (!a.upsampled.empty()) paths.upsampled_path = a.upsampled;
  if (!a.raw_json.empty()) paths.raw_json_path = a.raw_json;
  ensure_parent(a.out);
  const AttentionMap att = export_heatmap(ck.model, image, a.attribute, paths);
  std::size_t best = 0;
  for (std::size_t r = 1; r < att.weights.size(); ++r)
    if (att.weights[r] > att.weights[best]) best = r;
  out << "attribute " << a.attribute << " peak cell (" << best / att.w << ", " << best % att.w
      << ") weight " << att.weights[best] << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Concept sharing network: synthetic data, training, evaluation, studies"};
  app.name("csn");
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic scene dataset");
  g->add_option("--config", gen.config, "JSON run config (gen, registry, n_scenes)")
      ->check(CLI::ExistingFile);
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Dataset seed");
  g->add_option("--scenes", gen.scenes, "Number of scenes (default n_scenes = 600)");
  g->add_option("--cap", gen.cap, "Per-attribute cap on retained positive labels");
  g->add_option("--holdout", gen.holdout, "PART:PATTERN withheld from train.jsonl (repeatable)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a generated dataset");
  t->add_option("--config", tr.config, "JSON run config (backbone, train)")->check(CLI::ExistingFile);
  t->add_option("--data", tr.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--out", tr.out, "Checkpoint to write")->required();
  t->add_option("--resume", tr.resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  t->add_option("--history", tr.history, "Write per-epoch history JSON here");
  t->add_option("--seed", tr.seed, "Initialization, shuffling and split seed");
  t->add_option("--epochs", tr.epochs, "Total epochs (including resumed ones)");
  t->add_option("--lr", tr.lr, "Initial learning rate");
  t->add_option("--batch-size", tr.batch_size, "Images per minibatch");
  t->add_option("--sharing-mode", tr.sharing_mode, "none | part_only | part_and_pattern | soft");
  t->add_option("--optimizer", tr.optimizer, "adam | sgd");
  t->add_option("--soft-init", tr.soft_init, "one_hot | all_ones");
  t->add_flag("--no-classifier-bias", tr.no_bias, "Pattern classifiers without bias");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset manifest");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--manifest", ev.manifest, "Manifest inside the dataset")->capture_default_str();
  e->add_option("--out", ev.out, "Write the JSON report here");
  e->add_option("--text", ev.text, "Write the text report here");
  e->add_option("--compose", ev.compose, "PART:PATTERN composed before evaluation (repeatable)");
  e->add_option("--seed", ev.seed, "Accepted for symmetry; evaluation draws no random numbers");

  StudyArgs ab;
  auto* b = app.add_subcommand("ablate", "Sharing-mode by label-cap ablation");
  b->add_option("--config", ab.config, "JSON experiment config")->check(CLI::ExistingFile);
  b->add_option("--out", ab.out, "Report directory")->required();
  b->add_option("--seed", ab.seed, "First run seed; later runs use seed+1, seed+2, ...");
  b->add_option("--threads", ab.threads, "Concurrent runs (default CSN_THREADS or 1)");

  StudyArgs zs;
  auto* z = app.add_subcommand("zeroshot", "Zero-shot composition study");
  z->add_option("--config", zs.config, "JSON experiment config")->check(CLI::ExistingFile);
  z->add_option("--out", zs.out, "Report directory")->required();
  z->add_option("--holdout", zs.holdout, "PART:PATTERN held out (repeatable)");
  z->add_option("--seed", zs.seed, "First run seed; later runs use seed+1, seed+2, ...");
  z->add_option("--threads", zs.threads, "Concurrent runs (default CSN_THREADS or 1)");

  HeatmapArgs hm;
  auto* h = app.add_subcommand("heatmap", "Export an attribute's attention map as PGM");
  h->add_option("--checkpoint", hm.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  h->add_option("--image", hm.image, "Input PPM image")->required()->check(CLI::ExistingFile);
  h->add_option("--attribute", hm.attribute, "Attribute id")->required();
  h->add_option("--out", hm.out, "h x w PGM to write")->required();
  h->add_option("--upsampled", hm.upsampled, "Also write an S x S nearest-neighbour PGM");
  h->add_option("--raw-json", hm.raw_json, "Also write the unscaled attention values");
  h->add_option("--compose", hm.compose, "PART:PATTERN composed before export (repeatable)");
  h->add_option("--seed", hm.seed, "Accepted for symmetry; export draws no random numbers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const CLI::App* s : app.get_subcommands()) target = s;
    out << target->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "csn: " << ex.what() << "\n\n";
    const CLI::App* target = &app;
    for (const CLI::App* s : app.get_subcommands()) target = s;
    err << target->help();
    return kExitUsage;
  }

  try {
    if (g->parsed()) cmd_gen(gen, *g, out);
    else if (t->parsed()) cmd_train(tr, *t, out);
    else if (e->parsed()) cmd_eval(ev, out);
    else if (b->parsed()) cmd_ablate(ab, *b, out);
    else if (z->parsed()) cmd_zeroshot(zs, *z, out);
    else if (h->parsed()) cmd_heatmap(hm, out);
  } catch (const std::exception& ex) {
    err << "csn: error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace csn::cli
