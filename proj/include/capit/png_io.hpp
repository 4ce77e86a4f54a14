#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capit/tensor.hpp"

namespace capit {

/// Decoded PNG samples, interleaved, widened to 16 bits.
struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;   // 1 (gray) or 3 (RGB)
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> samples;
};

void write_png(const std::string& path, const RawPng& png);
RawPng read_png(const std::string& path);

/// Images in [-1, 1] are stored as 16-bit PNGs; values outside are clamped.
void write_image_png(const std::string& path, const Image<double>& image);
Image<double> read_image_png(const std::string& path);

/// Snaps values onto the 16-bit storage grid, so that
/// `read_image_png(write_image_png(quantize_16(x))) == quantize_16(x)`.
Image<double> quantize_16(const Image<double>& image);

}  // namespace capit
