#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "capit/error.hpp"

namespace capit {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Planar multi-channel image / feature map.
///
/// Storage is `channels x (height * width)`: each row is one channel, each
/// column one pixel, pixels flattened row-major (`p = i * width + j`). This is
/// the layout the convolution kernels consume directly, so a 1x1 linear map
/// over channels is a single matrix product.
template <typename Scalar>
struct Image {
  int height = 0;
  int width = 0;
  Matrix<Scalar> data;  // channels x (height*width)

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), data(Matrix<Scalar>::Zero(c, h * w)) {}
  Image(int h, int w, Matrix<Scalar> values) : height(h), width(w), data(std::move(values)) {
    CAPIT_REQUIRE(data.cols() == h * w, InvalidInput, "image data does not match h*w");
  }

  int channels() const { return static_cast<int>(data.rows()); }
  int pixels() const { return height * width; }
  int index(int i, int j) const { return i * width + j; }

  Scalar& at(int i, int j, int c) { return data(c, i * width + j); }
  Scalar at(int i, int j, int c) const { return data(c, i * width + j); }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels() == o.channels();
  }

  static Image constant(int h, int w, int c, Scalar v) {
    return Image(h, w, Matrix<Scalar>::Constant(c, h * w, v));
  }

  template <typename Other>
  Image<Other> cast() const {
    return Image<Other>(height, width, data.template cast<Other>());
  }
};

template <typename Scalar>
void require_same_shape(const Image<Scalar>& a, const Image<Scalar>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidInput(std::string(what) + ": shape mismatch (" + std::to_string(a.height) + "x" +
                       std::to_string(a.width) + "x" + std::to_string(a.channels()) + " vs " +
                       std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                       std::to_string(b.channels()) + ")");
  }
}

/// Stack channels of two same-size images (used for conditional D inputs).
template <typename Scalar>
Image<Scalar> concat_channels(const Image<Scalar>& a, const Image<Scalar>& b) {
  CAPIT_REQUIRE(a.height == b.height && a.width == b.width, InvalidInput,
                "concat_channels: spatial shape mismatch");
  Matrix<Scalar> out(a.channels() + b.channels(), a.pixels());
  out << a.data, b.data;
  return Image<Scalar>(a.height, a.width, std::move(out));
}

/// Integer shift with zero fill: out(i, j) = in(i - dy, j - dx).
template <typename Scalar>
Image<Scalar> shift_image(const Image<Scalar>& in, int dy, int dx) {
  Image<Scalar> out(in.height, in.width, in.channels());
  for (int i = 0; i < in.height; ++i) {
    const int si = i - dy;
    if (si < 0 || si >= in.height) continue;
    for (int j = 0; j < in.width; ++j) {
      const int sj = j - dx;
      if (sj < 0 || sj >= in.width) continue;
      out.data.col(out.index(i, j)) = in.data.col(in.index(si, sj));
    }
  }
  return out;
}

}  // namespace capit
