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

#include "csn/checkpoint.hpp"
#include "csn/errors.hpp"
#include "csn/image_io.hpp"
#include "csn/model.hpp"
#include "csn/training.hpp"
#include "support.hpp"

using namespace csn;

namespace {

ConceptRegistry registry_2x2() { return ConceptRegistry::full_grid({"a", "b"}, {"x", "y"}); }

TrainResult short_run(SharingMode mode) {
  std::mt19937_64 rng(3);
  TrainingSet set;
  for (std::size_t i = 0; i < 5; ++i) {
    set.images.push_back(test::random_tensor({3, 8, 8}, rng, 0.0, 1.0));
    for (int a = 0; a < 4; ++a) set.examples.push_back({i, a, static_cast<int>((i + a) % 2)});
  }
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 2;
  c.sharing_mode = mode;
  return train(make_model(test::tiny_backbone(), registry_2x2(), mode, 1), set, c);
}

void check_same(const CsnModel& a, const CsnModel& b) {
  CHECK(a.backbone_config == b.backbone_config);
  CHECK(a.parameter_names() == b.parameter_names());
  const auto pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(bit_identical(*pa[i], *pb[i]));
  CHECK(a.head.mode == b.head.mode);
  CHECK(a.head.bindings == b.head.bindings);
  CHECK(a.registry.attributes().size() == b.registry.attributes().size());
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  for (SharingMode mode : {SharingMode::kNone, SharingMode::kPartAndPattern, SharingMode::kSoft}) {
    const TrainResult r = short_run(mode);
    TrainConfig cfg;
    cfg.sharing_mode = mode;
    const auto bytes = encode_checkpoint(r.model, r.state, &cfg);
    const Checkpoint back = decode_checkpoint(bytes);
    check_same(r.model, back.model);
    CHECK(back.state.epoch == r.state.epoch);
    CHECK(back.state.rng_state == r.state.rng_state);
    CHECK(back.state.optimizer.step == r.state.optimizer.step);
    REQUIRE(back.state.optimizer.first_moment.size() == r.state.optimizer.first_moment.size());
    for (std::size_t i = 0; i < r.state.optimizer.first_moment.size(); ++i) {
      CHECK(bit_identical(back.state.optimizer.first_moment[i], r.state.optimizer.first_moment[i]));
      CHECK(bit_identical(back.state.optimizer.second_moment[i], r.state.optimizer.second_moment[i]));
    }
    REQUIRE(back.train_config.has_value());
    CHECK(back.train_config->sharing_mode == mode);
    CHECK(encode_checkpoint(back.model, back.state, &*back.train_config) == bytes);
  }
}

TEST_CASE("checkpoint files") {
  const TrainResult r = short_run(SharingMode::kPartAndPattern);
  test::TempDir dir("ckpt");
  save_checkpoint(dir / "m.ckpt", r.model, r.state);
  const Checkpoint back = load_checkpoint(dir / "m.ckpt");
  check_same(r.model, back.model);
  CHECK_FALSE(back.train_config.has_value());
  CHECK(parameter_checksum(back.model) == parameter_checksum(r.model));
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), IoError);
}

TEST_CASE("composed attributes survive a round trip") {
  TrainResult r = short_run(SharingMode::kPartAndPattern);
  ConceptRegistry reg({{0, "a"}, {1, "b"}}, {{0, "x"}, {1, "y"}}, {{0, 0, 1, "a_y"}, {1, 1, 0, "b_x"}});
  CsnModel model = make_model(test::tiny_backbone(), reg, SharingMode::kPartAndPattern, 2);
  compose_zero_shot(model.registry, model.head, 0, 0, 7, "a_x");
  const Checkpoint back = decode_checkpoint(encode_checkpoint(model, r.state));
  check_same(model, back.model);
  CHECK(back.model.registry.attribute(7).name == "a_x");
  CHECK(back.model.head.binding(7) == HeadBinding{0, 0, std::nullopt});
}

TEST_CASE("malformed checkpoints are format errors") {
  const TrainResult r = short_run(SharingMode::kPartAndPattern);
  const auto bytes = encode_checkpoint(r.model, r.state);
  SUBCASE("truncated") {
    for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{10}, bytes.size() / 2,
                             bytes.size() - 1}) {
      const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep));
      CHECK_THROWS_AS(decode_checkpoint(cut), FormatError);
    }
  }
  SUBCASE("wrong magic") {
    auto bad = bytes;
    bad[0] = 'X';
    try {
      decode_checkpoint(bad);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("CSN1") != std::string::npos);
      CHECK(e.offset() == 0);
    }
  }
  SUBCASE("wrong version") {
    auto bad = bytes;
    bad[4] = 9;
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  }
  SUBCASE("trailing bytes") {
    auto bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  }
}

TEST_CASE("ppm and pgm codecs") {
  std::mt19937_64 rng(2);
  const Tensor img = quantize(test::random_tensor({3, 5, 4}, rng, 0.0, 1.0));
  const std::string bytes = encode_ppm(img);
  CHECK(bytes.rfind("P6\n4 5\n255\n", 0) == 0);
  CHECK(bit_identical(decode_ppm(bytes), img));
  CHECK(to_byte(-1.0) == 0);
  CHECK(to_byte(2.0) == 255);
  CHECK(to_byte(0.5) == 128);
  CHECK_THROWS_AS(decode_ppm("P5\n1 1\n255\n\x01"), FormatError);
  CHECK_THROWS_AS(decode_ppm(bytes.substr(0, bytes.size() - 1)), FormatError);

  GrayImage g{3, 2, {0, 10, 20, 30, 40, 255}};
  const GrayImage back = decode_pgm(encode_pgm(g));
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.pixels == g.pixels);
  CHECK(encode_pgm(g).rfind("P5\n", 0) == 0);
  test::TempDir dir("io");
  write_pgm(dir / "g.pgm", g);
  CHECK(read_pgm(dir / "g.pgm").pixels == g.pixels);
  CHECK_THROWS_AS(read_file(dir / "none"), IoError);
}
