#include "capit/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "capit/error.hpp"

namespace capit {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw IoError(std::string("png: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

std::uint16_t to_u16(double v) {
  const double u = std::clamp((v + 1.0) * 0.5, 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(u * 65535.0));
}

double from_u16(std::uint16_t s) { return static_cast<double>(s) / 65535.0 * 2.0 - 1.0; }

}  // namespace

void write_png(const std::string& path, const RawPng& png) {
  CAPIT_REQUIRE(png.channels == 1 || png.channels == 3, InvalidInput, "png: channels must be 1 or 3");
  CAPIT_REQUIRE(png.bit_depth == 8 || png.bit_depth == 16, InvalidInput, "png: bit depth must be 8 or 16");
  CAPIT_REQUIRE(png.samples.size() == static_cast<std::size_t>(png.width) * png.height * png.channels,
                InvalidInput, "png: sample count mismatch");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path);

  png_structp ps = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(ps);
  struct Guard {
    png_structp* ps;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(ps, info); }
  } guard{&ps, &info};

  png_init_io(ps, fp.get());
  png_set_IHDR(ps, info, png.width, png.height, png.bit_depth,
               png.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ps, info);

  const int bytes_per_sample = png.bit_depth / 8;
  const std::size_t row_bytes = static_cast<std::size_t>(png.width) * png.channels * bytes_per_sample;
  std::vector<unsigned char> row(row_bytes);
  for (int y = 0; y < png.height; ++y) {
    const std::size_t base = static_cast<std::size_t>(y) * png.width * png.channels;
    for (std::size_t k = 0; k < static_cast<std::size_t>(png.width) * png.channels; ++k) {
      const std::uint16_t s = png.samples[base + k];
      if (bytes_per_sample == 1) {
        row[k] = static_cast<unsigned char>(s);
      } else {  // PNG is big-endian
        row[2 * k] = static_cast<unsigned char>(s >> 8);
        row[2 * k + 1] = static_cast<unsigned char>(s & 0xff);
      }
    }
    png_write_row(ps, row.data());
  }
  png_write_end(ps, nullptr);
}

RawPng read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError(path + " is not a PNG file");
  }
  png_structp ps = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(ps);
  struct Guard {
    png_structp* ps;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(ps, info, nullptr); }
  } guard{&ps, &info};

  png_init_io(ps, fp.get());
  png_set_sig_bytes(ps, 8);
  png_read_info(ps, info);

  RawPng out;
  out.width = static_cast<int>(png_get_image_width(ps, info));
  out.height = static_cast<int>(png_get_image_height(ps, info));
  const int color = png_get_color_type(ps, info);
  out.bit_depth = png_get_bit_depth(ps, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ps);
  if (color == PNG_COLOR_TYPE_GRAY && out.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ps);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(ps);
  if (out.bit_depth < 8) out.bit_depth = 8;
  png_read_update_info(ps, info);
  out.channels = png_get_channels(ps, info);
  if (out.channels != 1 && out.channels != 3) throw IoError(path + ": unsupported channel layout");

  const std::size_t row_bytes = png_get_rowbytes(ps, info);
  std::vector<unsigned char> row(row_bytes);
  out.samples.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
  const std::size_t per_row = static_cast<std::size_t>(out.width) * out.channels;
  for (int y = 0; y < out.height; ++y) {
    png_read_row(ps, row.data(), nullptr);
    for (std::size_t k = 0; k < per_row; ++k) {
      out.samples[y * per_row + k] = out.bit_depth == 16
                                         ? static_cast<std::uint16_t>((row[2 * k] << 8) | row[2 * k + 1])
                                         : row[k];
    }
  }
  png_read_end(ps, nullptr);
  return out;
}

void write_image_png(const std::string& path, const Image<double>& image) {
  CAPIT_REQUIRE(image.channels() == 1 || image.channels() == 3, InvalidInput,
                "write_image_png: 1 or 3 channels required");
  RawPng png;
  png.width = image.width;
  png.height = image.height;
  png.channels = image.channels();
  png.bit_depth = 16;
  png.samples.resize(static_cast<std::size_t>(image.pixels()) * png.channels);
  for (int p = 0; p < image.pixels(); ++p) {
    for (int c = 0; c < png.channels; ++c) png.samples[p * png.channels + c] = to_u16(image.data(c, p));
  }
  write_png(path, png);
}

Image<double> read_image_png(const std::string& path) {
  const RawPng png = read_png(path);
  Image<double> img(png.height, png.width, png.channels);
  const double scale = png.bit_depth == 16 ? 1.0 : 65535.0 / 255.0;
  for (int p = 0; p < img.pixels(); ++p) {
    for (int c = 0; c < png.channels; ++c) {
      const double s = png.samples[p * png.channels + c] * scale;
      img.data(c, p) = s / 65535.0 * 2.0 - 1.0;
    }
  }
  return img;
}

Image<double> quantize_16(const Image<double>& image) {
  Image<double> out = image;
  out.data = image.data.unaryExpr([](double v) { return from_u16(to_u16(v)); });
  return out;
}

}  // namespace capit
