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

#include "csn/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "csn/errors.hpp"

namespace csn {

GrayImage heatmap_image(const AttentionMap& att) {
  if (att.weights.size() != att.h * att.w || att.h == 0 || att.w == 0)
    throw DimensionError("attention map of " + shape_string(att.weights.shape()) +
                         " does not match grid " + std::to_string(att.h) + "x" +
                         std::to_string(att.w));
  const auto v = att.weights.data();
  const double peak = *std::max_element(v.begin(), v.end());
  if (!(peak > 0.0)) throw ContractError("attention map has no positive cell");
  GrayImage img{att.w, att.h, std::vector<std::uint8_t>(v.size())};
  for (std::size_t r = 0; r < v.size(); ++r) img.pixels[r] = to_byte(v[r] / peak);
  return img;
}

GrayImage upsample_nearest(const GrayImage& image, std::size_t width, std::size_t height) {
  if (image.width == 0 || image.height == 0 || width == 0 || height == 0)
    throw DimensionError("cannot resize an empty image");
  GrayImage out{width, height, std::vector<std::uint8_t>(width * height)};
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = y * image.height / height;
    for (std::size_t x = 0; x < width; ++x)
      out.pixels[y * width + x] = image.pixels[sy * image.width + x * image.width / width];
  }
  return out;
}

nlohmann::json heatmap_json(const AttentionMap& att) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t y = 0; y < att.h; ++y) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t x = 0; x < att.w; ++x) row.push_back(att.weights[flatten_cell(y, x, att.w)]);
    rows.push_back(std::move(row));
  }
  return {{"h", att.h}, {"w", att.w}, {"weights", std::move(rows)}};
}

AttentionMap export_heatmap(const CsnModel& model, const Tensor& image, int attribute_id,
                            const HeatmapOutputs& out) {
  AttentionMap att = attention_map(model, image, attribute_id);
  const GrayImage grid = heatmap_image(att);
  write_pgm(out.grid_path, grid);
  if (out.upsampled_path) {
    const std::size_t s = model.backbone_config.input_size;
    write_pgm(*out.upsampled_path, upsample_nearest(grid, s, s));
  }
  if (out.raw_json_path) write_file(*out.raw_json_path, heatmap_json(att).dump(2) + "\n");
  return att;
}

}  // namespace csn
