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

#ifndef CSN_BACKBONE_HPP_
#define CSN_BACKBONE_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "csn/autodiff.hpp"
#include "csn/mask.hpp"
#include "csn/tensor.hpp"

namespace csn {

struct ConvLayerSpec {
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

// Stack of valid-padding convolutions, each followed by relu. The final
// layer's channel count is the descriptor dimension d.
struct BackboneConfig {
  std::size_t input_size = 32;
  std::size_t input_channels = 3;
  std::vector<ConvLayerSpec> layers = {{8, 3, 1}, {16, 3, 2}, {16, 3, 2}};

  std::size_t feature_dim() const;
  // Side of the square output grid (h == w).
  std::size_t grid_size() const;
  std::size_t cells() const { return grid_size() * grid_size(); }
  // Receptive field of one output cell.
  CellFootprint cell_footprint() const;
  // Throws ConfigError unless the grid is at least 2x2 and d >= 2.
  void validate() const;

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

struct BackboneParams {
  std::vector<Tensor> kernels;  // c_out x c_in x k x k
  std::vector<Tensor> biases;   // c_out
};

// Row r of the hw x d value matrix describes grid cell (y, x) with
// r = y * w + x.
struct FeatureMap {
  Tensor values;
  std::size_t h = 0;
  std::size_t w = 0;
};

struct FeatureVar {
  ad::Var values;
  std::size_t h = 0;
  std::size_t w = 0;
};

inline std::size_t flatten_cell(std::size_t y, std::size_t x, std::size_t w) {
  return y * w + x;
}
inline std::pair<std::size_t, std::size_t> unflatten_cell(std::size_t r,
                                                          std::size_t w) {
  return {r / w, r % w};
}

// Glorot-uniform kernels, zero biases. Deterministic per seed.
BackboneParams init_backbone(const BackboneConfig& config, std::uint64_t seed);

// `layer_params` alternates kernel, bias for each layer.
FeatureVar extract_features(ad::Var image, std::span<const ad::Var> layer_params,
                            const BackboneConfig& config);
FeatureMap extract_features(const Tensor& image, const BackboneParams& params,
                            const BackboneConfig& config);

void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);

}  // namespace csn

#endif  // CSN_BACKBONE_HPP_
