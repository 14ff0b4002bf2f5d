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

#include "csn/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "csn/errors.hpp"

namespace csn {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

Tensor quantize(const Tensor& image) {
  Tensor out = image;
  for (auto& v : out.mutable_data()) v = to_byte(v) / 255.0;
  return out;
}

namespace {

// Netpbm header: magic, then width, height, maxval separated by whitespace,
// '#' comments allowed; exactly one whitespace byte precedes the raster.
struct PnmHeader {
  std::size_t width, height, maxval, raster_offset;
};

PnmHeader parse_header(const std::string& bytes, const char* magic) {
  if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1]) {
    throw FormatError(std::string("expected netpbm magic '") + magic + "'", 0);
  }
  std::size_t pos = 2;
  auto next_number = [&]() -> std::size_t {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      throw FormatError("malformed netpbm header", pos);
    }
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > (1u << 24)) throw FormatError("netpbm dimension too large", pos);
      ++pos;
    }
    return v;
  };
  PnmHeader h{};
  h.width = next_number();
  h.height = next_number();
  h.maxval = next_number();
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("missing whitespace before raster", pos);
  }
  h.raster_offset = pos + 1;
  if (h.width == 0 || h.height == 0) throw FormatError("zero image dimension", 2);
  if (h.maxval != 255) throw FormatError("only 8-bit netpbm (maxval 255) is supported", pos);
  return h;
}

}  // namespace

std::string encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("encode_ppm expects 3 x H x W, got " + shape_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + 3 * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out.push_back(static_cast<char>(to_byte(image[(c * h + y) * w + x])));
  return out;
}

Tensor decode_ppm(const std::string& bytes) {
  const PnmHeader hd = parse_header(bytes, "P6");
  const std::size_t need = 3 * hd.width * hd.height;
  if (bytes.size() - hd.raster_offset < need) {
    throw FormatError("truncated PPM raster", bytes.size());
  }
  Tensor out({3, hd.height, hd.width});
  for (std::size_t y = 0; y < hd.height; ++y)
    for (std::size_t x = 0; x < hd.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const auto b = static_cast<unsigned char>(
            bytes[hd.raster_offset + 3 * (y * hd.width + x) + c]);
        out[(c * hd.height + y) * hd.width + x] = b / 255.0;
      }
  return out;
}

std::string encode_pgm(const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height || image.width == 0) {
    throw DimensionError("encode_pgm: pixel count does not match dimensions");
  }
  std::string out = "P5\n" + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

GrayImage decode_pgm(const std::string& bytes) {
  const PnmHeader hd = parse_header(bytes, "P5");
  const std::size_t need = hd.width * hd.height;
  if (bytes.size() - hd.raster_offset < need) {
    throw FormatError("truncated PGM raster", bytes.size());
  }
  GrayImage g{hd.width, hd.height, {}};
  g.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(hd.raster_offset),
                  bytes.begin() + static_cast<std::ptrdiff_t>(hd.raster_offset + need));
  return g;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open file");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot write file");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path, "failed writing file");
}

void write_ppm(const std::string& path, const Tensor& image) { write_file(path, encode_ppm(image)); }
Tensor read_ppm(const std::string& path) { return decode_ppm(read_file(path)); }
void write_pgm(const std::string& path, const GrayImage& image) {
  write_file(path, encode_pgm(image));
}
GrayImage read_pgm(const std::string& path) { return decode_pgm(read_file(path)); }

}  // namespace csn
