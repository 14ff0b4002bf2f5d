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

#include <random>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "csn/backbone.hpp"
#include "csn/errors.hpp"
#include "csn/gradcheck.hpp"
#include "support.hpp"

using namespace csn;
using csn::test::random_tensor;

TEST_CASE("init is deterministic per seed") {
  const BackboneConfig c;
  const BackboneParams a = init_backbone(c, 42), b = init_backbone(c, 42);
  const BackboneParams other = init_backbone(c, 43);
  REQUIRE(a.kernels.size() == c.layers.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.kernels.size(); ++i) {
    CHECK(bit_identical(a.kernels[i], b.kernels[i]));
    CHECK(bit_identical(a.biases[i], b.biases[i]));
    differs = differs || !(a.kernels[i] == other.kernels[i]);
    for (double v : a.biases[i].data()) CHECK(v == 0.0);
  }
  CHECK(differs);
}

TEST_CASE("degenerate grids are config errors") {
  BackboneConfig c;
  c.input_size = 8;
  c.layers = {{4, 3, 2}, {4, 3, 1}};  // 8 -> 3 -> 1
  CHECK(c.grid_size() == 1);
  CHECK_THROWS_AS(init_backbone(c, 0), ConfigError);
  c.layers = {{4, 9, 1}};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.layers = {{1, 3, 1}};
  CHECK_THROWS_AS(c.validate(), ConfigError);  // d = 1
}

TEST_CASE("default backbone yields a 6x6 grid of 16-d descriptors") {
  const BackboneConfig c;
  CHECK(c.grid_size() == 6);
  CHECK(c.feature_dim() == 16);
  std::mt19937_64 rng(0);
  const FeatureMap f =
      extract_features(random_tensor({3, 32, 32}, rng, 0.0, 1.0), init_backbone(c, 1), c);
  CHECK(f.values.shape() == Shape{36, 16});
  CHECK(f.h == 6);
  CHECK(f.w == 6);
}

TEST_CASE("output shape depends only on config") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    BackboneConfig c;
    c.input_size = 10 + trial;
    c.layers = {{2 + static_cast<std::size_t>(trial % 3), 3, 1},
                {3, 2 + static_cast<std::size_t>(trial % 2), 2}};
    const BackboneParams p = init_backbone(c, trial);
    const FeatureMap a = extract_features(random_tensor({3, c.input_size, c.input_size}, rng), p, c);
    const FeatureMap b =
        extract_features(Tensor({3, c.input_size, c.input_size}, 0.3), p, c);
    CHECK(a.values.shape() == b.values.shape());
    CHECK(a.h == c.grid_size());
    CHECK(a.values.shape() == Shape{c.cells(), c.feature_dim()});
  }
}

TEST_CASE("zero image with zero biases gives zero features") {
  const BackboneConfig c;
  const FeatureMap f = extract_features(Tensor({3, 32, 32}), init_backbone(c, 5), c);
  for (double v : f.values.data()) CHECK(v == 0.0);
}

TEST_CASE("wrong image shape is a dimension error") {
  const BackboneConfig c;
  CHECK_THROWS_AS(extract_features(Tensor({3, 31, 32}), init_backbone(c, 5), c), DimensionError);
  CHECK_THROWS_AS(extract_features(Tensor({1, 32, 32}), init_backbone(c, 5), c), DimensionError);
}

TEST_CASE("rows follow y * w + x") {
  BackboneConfig c;
  c.input_size = 5;
  c.input_channels = 2;
  c.layers = {{2, 1, 1}};
  BackboneParams p = init_backbone(c, 0);
  p.kernels[0] = Tensor({2, 2, 1, 1});
  p.kernels[0][0] = 1.0;  // channel 0 -> 0
  p.kernels[0][3] = 1.0;  // channel 1 -> 1
  Tensor img({2, 5, 5});
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 5; ++x) {
      img[y * 5 + x] = static_cast<double>(y);
      img[25 + y * 5 + x] = static_cast<double>(x);
    }
  const FeatureMap f = extract_features(img, p, c);
  for (std::size_t r = 0; r < 25; ++r) {
    const auto [y, x] = unflatten_cell(r, 5);
    CHECK(f.values.at(r, 0) == static_cast<double>(y));
    CHECK(f.values.at(r, 1) == static_cast<double>(x));
  }
}

TEST_CASE("flattening is a bijection") {
  for (std::size_t h = 1; h <= 9; ++h)
    for (std::size_t w = 1; w <= 9; ++w) {
      std::vector<int> seen(h * w, 0);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t r = flatten_cell(y, x, w);
          REQUIRE(r < h * w);
          ++seen[r];
          CHECK(unflatten_cell(r, w) == std::pair{y, x});
        }
      for (int s : seen) CHECK(s == 1);
    }
}

TEST_CASE("feature gradient wrt first kernel matches central differences") {
  const BackboneConfig c = test::tiny_backbone();
  std::mt19937_64 rng(8);
  const Tensor img = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
  BackboneParams p = init_backbone(c, 3);
  for (auto& b : p.biases)
    for (auto& v : b.mutable_data()) v = 0.1;
  const auto f = [&](ad::Tape& tape, std::span<const ad::Var> k) {
    std::vector<ad::Var> vars = {k[0], tape.constant(p.biases[0]), tape.constant(p.kernels[1]),
                                 tape.constant(p.biases[1])};
    return ad::sum(extract_features(tape.constant(img), vars, c).values);
  };
  const auto rep = ad::gradient_check(f, {p.kernels[0]}, 1e-5, 1e-4);
  CHECK(rep.passed());
}

TEST_CASE("receptive field of the default backbone") {
  const CellFootprint f = BackboneConfig{}.cell_footprint();
  CHECK(f.stride == 4);
  CHECK(f.extent == 9);
  BackboneConfig one;
  one.layers = {{4, 5, 1}};
  CHECK(one.cell_footprint() == CellFootprint{1, 5});
}

TEST_CASE("config json round trip") {
  BackboneConfig c;
  c.input_size = 20;
  c.layers = {{5, 3, 1}, {7, 2, 2}};
  CHECK(nlohmann::json(c).get<BackboneConfig>() == c);
  const auto tuple = nlohmann::json::parse(R"({"layers": [[4, 3, 1], [6, 3, 2]]})");
  CHECK(tuple.get<BackboneConfig>().layers == std::vector<ConvLayerSpec>{{4, 3, 1}, {6, 3, 2}});
}
