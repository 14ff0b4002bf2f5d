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

#include "csn/backbone.hpp"

#include <cmath>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "csn/errors.hpp"

namespace csn {

std::size_t BackboneConfig::feature_dim() const {
  return layers.empty() ? input_channels : layers.back().out_channels;
}

std::size_t BackboneConfig::grid_size() const {
  std::size_t side = input_size;
  for (const auto& l : layers) {
    if (l.kernel == 0 || l.stride == 0 || l.kernel > side) return 0;
    side = (side - l.kernel) / l.stride + 1;
  }
  return side;
}

CellFootprint BackboneConfig::cell_footprint() const {
  CellFootprint f;
  for (const auto& l : layers) {
    f.extent += (l.kernel - 1) * f.stride;
    f.stride *= l.stride;
  }
  return f;
}

void BackboneConfig::validate() const {
  if (input_channels == 0) throw ConfigError("backbone: input_channels must be positive");
  for (const auto& l : layers) {
    if (l.out_channels == 0 || l.kernel == 0 || l.stride == 0) {
      throw ConfigError("backbone: layer extents must be positive");
    }
  }
  const std::size_t g = grid_size();
  if (g < 2) {
    throw ConfigError("backbone: output grid is " + std::to_string(g) + "x" +
                      std::to_string(g) + ", need at least 2x2");
  }
  if (feature_dim() < 2) throw ConfigError("backbone: feature_dim must be >= 2");
}

BackboneParams init_backbone(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  BackboneParams params;
  std::size_t c_in = config.input_channels;
  for (const auto& l : config.layers) {
    const double fan_in = static_cast<double>(c_in * l.kernel * l.kernel);
    const double fan_out = static_cast<double>(l.out_channels * l.kernel * l.kernel);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    Tensor k({l.out_channels, c_in, l.kernel, l.kernel});
    for (auto& v : k.mutable_data()) v = dist(rng);
    params.kernels.push_back(std::move(k));
    params.biases.emplace_back(Shape{l.out_channels}, 0.0);
    c_in = l.out_channels;
  }
  return params;
}

FeatureVar extract_features(ad::Var image, std::span<const ad::Var> layer_params,
                            const BackboneConfig& config) {
  const Shape expected{config.input_channels, config.input_size, config.input_size};
  if (image.shape() != expected) {
    throw DimensionError("backbone: image shape " + shape_string(image.shape()) +
                         " does not match expected " + shape_string(expected));
  }
  if (layer_params.size() != 2 * config.layers.size()) {
    throw DimensionError("backbone: expected " +
                         std::to_string(2 * config.layers.size()) +
                         " parameter tensors");
  }
  ad::Var x = image;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    x = ad::conv2d(x, layer_params[2 * i], config.layers[i].stride);
    x = ad::add_channel_bias(x, layer_params[2 * i + 1]);
    x = ad::relu(x);
  }
  const std::size_t d = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  ad::Var q = ad::transpose(ad::reshape(x, {d, h * w}));
  return {q, h, w};
}

FeatureMap extract_features(const Tensor& image, const BackboneParams& params,
                            const BackboneConfig& config) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (std::size_t i = 0; i < params.kernels.size(); ++i) {
    vars.push_back(tape.constant(params.kernels[i]));
    vars.push_back(tape.constant(params.biases[i]));
  }
  FeatureVar f = extract_features(tape.constant(image), vars, config);
  return {f.values.value(), f.h, f.w};
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = nlohmann::json{{"input_size", c.input_size},
                     {"input_channels", c.input_channels},
                     {"layers", nlohmann::json::array()}};
  for (const auto& l : c.layers) {
    j["layers"].push_back({{"out_channels", l.out_channels},
                           {"kernel", l.kernel},
                           {"stride", l.stride}});
  }
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
  c = BackboneConfig{};
  c.input_size = j.value("input_size", c.input_size);
  c.input_channels = j.value("input_channels", c.input_channels);
  if (j.contains("layers")) {
    c.layers.clear();
    for (const auto& l : j.at("layers")) {
      if (l.is_array()) {
        c.layers.push_back({l.at(0).get<std::size_t>(), l.at(1).get<std::size_t>(),
                            l.at(2).get<std::size_t>()});
      } else {
        c.layers.push_back({l.at("out_channels").get<std::size_t>(),
                            l.at("kernel").get<std::size_t>(),
                            l.value("stride", std::size_t{1})});
      }
    }
  }
}

}  // namespace csn
