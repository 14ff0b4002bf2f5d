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

#include "csn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "csn/errors.hpp"

namespace csn {

namespace {

using nlohmann::json;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t at, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[at + i]) << (8 * i);
  return v;
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  put_u64(out, bits);
}

struct NamedTensor {
  std::string name;
  const Tensor* tensor;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const CsnModel& model, const TrainState& state,
                                            const TrainConfig* config) {
  std::vector<NamedTensor> tensors;
  const auto names = model.parameter_names();
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) tensors.push_back({names[i], params[i]});
  const auto& opt = state.optimizer;
  for (std::size_t i = 0; i < opt.first_moment.size(); ++i)
    tensors.push_back({"optimizer.m." + std::to_string(i), &opt.first_moment[i]});
  for (std::size_t i = 0; i < opt.second_moment.size(); ++i)
    tensors.push_back({"optimizer.v." + std::to_string(i), &opt.second_moment[i]});

  json header;
  header["backbone_config"] = model.backbone_config;
  header["registry"] = model.registry;
  header["sharing_mode"] = to_string(model.head.mode);
  header["slots"] = {{"parts", model.head.params.part_vectors.size()},
                     {"patterns", model.head.params.pattern_classifiers.size()},
                     {"pattern_biases", model.head.params.pattern_biases.size()},
                     {"soft", model.head.params.soft_weights.size()}};
  header["bindings"] = json::array();
  for (const auto& [k, b] : model.head.bindings) {
    json jb{{"attribute", k}, {"part_slot", b.part_slot}, {"pattern_slot", b.pattern_slot}};
    if (b.soft_slot) jb["soft_slot"] = *b.soft_slot;
    header["bindings"].push_back(jb);
  }
  header["optimizer"] = {{"kind", to_string(opt.kind)},
                         {"step", opt.step},
                         {"moments", opt.first_moment.size()}};
  header["rng_state"] = state.rng_state;
  header["epoch"] = state.epoch;
  if (config) header["train_config"] = *config;
  header["tensors"] = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    header["tensors"].push_back(
        {{"name", t.name}, {"shape", t.tensor->shape()}, {"offset", offset}});
    offset += t.tensor->size() * sizeof(double);
  }

  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(16 + text.size() + offset);
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : tensors)
    for (double d : t.tensor->data()) put_f64(out, d);
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("bad checkpoint magic, expected 'CSN1'", 0);
  }
  if (bytes.size() < 16) throw FormatError("truncated checkpoint preamble", bytes.size());
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion),
                      4);
  }
  const std::uint64_t header_len = get_le(bytes, 8, 8);
  if (header_len > bytes.size() - 16) {
    throw FormatError("header length " + std::to_string(header_len) + " exceeds file size",
                      8);
  }
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + header_len);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what(), 16);
  }
  const std::size_t payload_at = 16 + header_len;
  const std::span<const std::uint8_t> payload = bytes.subspan(payload_at);

  Checkpoint ck;
  try {
    CsnModel& m = ck.model;
    m.backbone_config = header.at("backbone_config").get<BackboneConfig>();
    m.registry = header.at("registry").get<ConceptRegistry>();
    m.head.mode = parse_sharing_mode(header.at("sharing_mode").get<std::string>());
    const auto& slots = header.at("slots");
    std::size_t c_in = m.backbone_config.input_channels;
    for (const auto& l : m.backbone_config.layers) {
      m.backbone.kernels.emplace_back(Shape{l.out_channels, c_in, l.kernel, l.kernel});
      m.backbone.biases.emplace_back(Shape{l.out_channels});
      c_in = l.out_channels;
    }
    const std::size_t d = m.backbone_config.feature_dim();
    m.head.params.part_vectors.assign(slots.at("parts").get<std::size_t>(), Tensor({d, 1}));
    m.head.params.pattern_classifiers.assign(slots.at("patterns").get<std::size_t>(),
                                             Tensor({d, 2}));
    m.head.params.pattern_biases.assign(slots.value("pattern_biases", std::size_t{0}),
                                        Tensor({1, 2}));
    m.head.params.soft_weights.assign(slots.at("soft").get<std::size_t>(),
                                      Tensor({m.registry.num_parts(), 1}));
    for (const auto& jb : header.at("bindings")) {
      HeadBinding b{jb.at("part_slot").get<std::size_t>(),
                    jb.at("pattern_slot").get<std::size_t>(), std::nullopt};
      if (jb.contains("soft_slot")) b.soft_slot = jb.at("soft_slot").get<std::size_t>();
      m.head.bindings[jb.at("attribute").get<int>()] = b;
    }
    const auto& opt = header.at("optimizer");
    ck.state.optimizer.kind = parse_optimizer(opt.at("kind").get<std::string>());
    ck.state.optimizer.step = opt.at("step").get<std::uint64_t>();
    const std::size_t moments = opt.at("moments").get<std::size_t>();
    ck.state.rng_state = header.at("rng_state").get<std::string>();
    ck.state.epoch = header.at("epoch").get<int>();
    if (header.contains("train_config")) ck.train_config = header.at("train_config").get<TrainConfig>();

    std::vector<Tensor*> targets = m.mutable_parameters();
    const auto& first = targets;
    for (std::size_t i = 0; i < moments; ++i)
      ck.state.optimizer.first_moment.emplace_back(first[i]->shape());
    for (std::size_t i = 0; i < moments; ++i)
      ck.state.optimizer.second_moment.emplace_back(first[i]->shape());
    for (auto& t : ck.state.optimizer.first_moment) targets.push_back(&t);
    for (auto& t : ck.state.optimizer.second_moment) targets.push_back(&t);

    const auto& dir = header.at("tensors");
    if (dir.size() != targets.size()) {
      throw FormatError("tensor directory lists " + std::to_string(dir.size()) +
                            " tensors, model needs " + std::to_string(targets.size()),
                        16);
    }
    std::uint64_t expected_offset = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& entry = dir[i];
      const Shape shape = entry.at("shape").get<Shape>();
      if (shape != targets[i]->shape()) {
        throw FormatError("tensor '" + entry.at("name").get<std::string>() + "' has shape " +
                              shape_string(shape) + ", expected " +
                              shape_string(targets[i]->shape()),
                          16);
      }
      const std::uint64_t off = entry.at("offset").get<std::uint64_t>();
      const std::uint64_t len = targets[i]->size() * sizeof(double);
      if (off != expected_offset || off + len > payload.size()) {
        throw FormatError("tensor '" + entry.at("name").get<std::string>() +
                              "' payload out of bounds",
                          payload_at + std::min<std::uint64_t>(off, payload.size()));
      }
      auto dst = targets[i]->mutable_data();
      for (std::size_t e = 0; e < dst.size(); ++e) {
        const std::uint64_t bits = get_le(payload, off + 8 * e, 8);
        std::memcpy(&dst[e], &bits, sizeof(double));
      }
      expected_offset = off + len;
    }
    if (expected_offset != payload.size()) {
      throw FormatError("trailing bytes after tensor payloads", payload_at + expected_offset);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid checkpoint header: ") + e.what(), 16);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid checkpoint header: ") + e.what(), 16);
  } catch (const DimensionError& e) {
    throw FormatError(std::string("invalid checkpoint header: ") + e.what(), 16);
  }
  return ck;
}

void save_checkpoint(const std::string& path, const CsnModel& model, const TrainState& state,
                     const TrainConfig* config) {
  const auto bytes = encode_checkpoint(model, state, config);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot write checkpoint");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path, "failed writing checkpoint");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open checkpoint");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace csn
