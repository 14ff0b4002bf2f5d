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

#ifndef CSN_IMAGE_IO_HPP_
#define CSN_IMAGE_IO_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "csn/tensor.hpp"

namespace csn {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

// round(255 * v) with v clamped to [0, 1].
std::uint8_t to_byte(double v);

// Snaps every value to the nearest 8-bit level, matching what a PPM round
// trip produces.
Tensor quantize(const Tensor& image);

// Binary P6 from a 3 x H x W tensor in [0, 1].
std::string encode_ppm(const Tensor& image);
void write_ppm(const std::string& path, const Tensor& image);
// Returns 3 x H x W with values byte / 255.
Tensor decode_ppm(const std::string& bytes);
Tensor read_ppm(const std::string& path);

std::string encode_pgm(const GrayImage& image);
void write_pgm(const std::string& path, const GrayImage& image);
GrayImage decode_pgm(const std::string& bytes);
GrayImage read_pgm(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace csn

#endif  // CSN_IMAGE_IO_HPP_
