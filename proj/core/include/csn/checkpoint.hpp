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

#ifndef CSN_CHECKPOINT_HPP_
#define CSN_CHECKPOINT_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csn/model.hpp"
#include "csn/training.hpp"

// Checkpoint layout (all integers little-endian):
//   "CSN1" | u32 version | u64 header length | JSON header | f64 payloads
// The header carries the configs, registry, head bindings, optimizer
// scalars and a tensor directory (name, shape, byte offset into the
// payload section). Payloads follow in directory order.
namespace csn {

inline constexpr char kCheckpointMagic[4] = {'C', 'S', 'N', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  CsnModel model;
  TrainState state;
  std::optional<TrainConfig> train_config;
};

std::vector<std::uint8_t> encode_checkpoint(const CsnModel& model, const TrainState& state,
                                            const TrainConfig* config = nullptr);
// Throws FormatError (with the failing byte offset) on bad magic, version,
// lengths or header contents.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const CsnModel& model, const TrainState& state,
                     const TrainConfig* config = nullptr);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace csn

#endif  // CSN_CHECKPOINT_HPP_
