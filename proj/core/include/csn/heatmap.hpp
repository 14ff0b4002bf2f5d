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

#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "csn/head.hpp"
#include "csn/image_io.hpp"
#include "csn/model.hpp"

namespace csn {

// h x w attention rescaled so the largest cell maps to 255.
GrayImage heatmap_image(const AttentionMap& att);

// Nearest-neighbour resize.
GrayImage upsample_nearest(const GrayImage& image, std::size_t width, std::size_t height);

// {"h", "w", "weights": [[...] per row]}; unscaled softmax values.
nlohmann::json heatmap_json(const AttentionMap& att);

struct HeatmapOutputs {
  std::string grid_path;                    // h x w PGM
  std::optional<std::string> upsampled_path;  // S x S PGM
  std::optional<std::string> raw_json_path;
};

AttentionMap export_heatmap(const CsnModel& model, const Tensor& image, int attribute_id,
                            const HeatmapOutputs& out);

}  // namespace csn
