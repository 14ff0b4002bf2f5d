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

#ifndef CSN_MASK_HPP_
#define CSN_MASK_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

namespace csn {

// Row-major binary grid (pixels or feature cells).
struct BinaryMask {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> cells;

  BinaryMask() = default;
  BinaryMask(std::size_t rows, std::size_t cols) : h(rows), w(cols), cells(rows * cols, 0) {}

  std::uint8_t at(std::size_t y, std::size_t x) const { return cells[y * w + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return cells[y * w + x]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto c : cells) n += c != 0;
    return n;
  }
  BinaryMask complement() const {
    BinaryMask out(h, w);
    for (std::size_t i = 0; i < cells.size(); ++i) out.cells[i] = cells[i] ? 0 : 1;
    return out;
  }
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// Pixel window of feature cell (gy, gx): rows [gy*stride, gy*stride+extent),
// likewise for columns, clipped to the image.
struct CellFootprint {
  std::size_t stride = 1;
  std::size_t extent = 1;
  friend bool operator==(const CellFootprint&, const CellFootprint&) = default;
};

}  // namespace csn

#endif  // CSN_MASK_HPP_
