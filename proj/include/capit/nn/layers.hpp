#pragma once

// Forward/backward kernels on planar images (channels x pixels). Each forward
// returns its output; whatever the backward pass needs is written into an
// optional cache.

#include <cmath>

#include "capit/tensor.hpp"

namespace capit::nn {

template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_size(int n) const { return (n + 2 * pad - kernel) / stride + 1; }
};

/// Unfolds zero-padded patches: row (c*k + ki)*k + kj, column oi*w_out + oj.
template <typename Scalar>
RowMajorMatrix<Scalar> im2col(const Image<Scalar>& x, const ConvGeometry& g) {
  const int ho = g.out_size(x.height), wo = g.out_size(x.width), k = g.kernel;
  RowMajorMatrix<Scalar> cols = RowMajorMatrix<Scalar>::Zero(x.channels() * k * k, ho * wo);
  for (int c = 0; c < x.channels(); ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        Scalar* row = cols.row((c * k + ki) * k + kj).data();
        for (int oi = 0; oi < ho; ++oi) {
          const int ii = oi * g.stride - g.pad + ki;
          if (ii < 0 || ii >= x.height) continue;
          for (int oj = 0; oj < wo; ++oj) {
            const int jj = oj * g.stride - g.pad + kj;
            if (jj < 0 || jj >= x.width) continue;
            row[oi * wo + oj] = x.data(c, ii * x.width + jj);
          }
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatters patch gradients back onto the input grid.
template <typename Scalar>
Image<Scalar> col2im(const RowMajorMatrix<Scalar>& dcols, int channels, int height, int width,
                     const ConvGeometry& g) {
  const int ho = g.out_size(height), wo = g.out_size(width), k = g.kernel;
  Image<Scalar> dx(height, width, channels);
  for (int c = 0; c < channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const Scalar* row = dcols.row((c * k + ki) * k + kj).data();
        for (int oi = 0; oi < ho; ++oi) {
          const int ii = oi * g.stride - g.pad + ki;
          if (ii < 0 || ii >= height) continue;
          for (int oj = 0; oj < wo; ++oj) {
            const int jj = oj * g.stride - g.pad + kj;
            if (jj < 0 || jj >= width) continue;
            dx.data(c, ii * width + jj) += row[oi * wo + oj];
          }
        }
      }
    }
  }
  return dx;
}

/// weight: c_out x (c_in*k*k); bias: c_out x 1.
template <typename Scalar>
Image<Scalar> conv2d_forward(const Image<Scalar>& x, const Matrix<Scalar>& weight, const Matrix<Scalar>& bias,
                             const ConvGeometry& g, RowMajorMatrix<Scalar>* cols_cache) {
  CAPIT_REQUIRE(weight.cols() == x.channels() * g.kernel * g.kernel, InvalidInput,
                "conv2d: input channels do not match weight");
  RowMajorMatrix<Scalar> cols = im2col(x, g);
  Matrix<Scalar> out = weight * cols;
  out.colwise() += bias.col(0);
  if (cols_cache) *cols_cache = std::move(cols);
  return Image<Scalar>(g.out_size(x.height), g.out_size(x.width), std::move(out));
}

/// Accumulates weight/bias gradients when the pointers are non-null; returns
/// the input gradient.
template <typename Scalar>
Image<Scalar> conv2d_backward(const Image<Scalar>& dy, const RowMajorMatrix<Scalar>& cols,
                              const Matrix<Scalar>& weight, int in_channels, int in_h, int in_w,
                              const ConvGeometry& g, Matrix<Scalar>* dweight, Matrix<Scalar>* dbias,
                              bool need_input_grad = true) {
  if (dweight) dweight->noalias() += dy.data * cols.transpose();
  if (dbias) *dbias += dy.data.rowwise().sum();
  if (!need_input_grad) return Image<Scalar>();
  RowMajorMatrix<Scalar> dcols = weight.transpose() * dy.data;
  return col2im(dcols, in_channels, in_h, in_w, g);
}

/// Per-channel normalisation over spatial positions, no affine parameters.
template <typename Scalar>
struct InstanceNormCache {
  Matrix<Scalar> normalized;
  Vector<Scalar> inv_std;
};

inline constexpr double kInstanceNormEps = 1e-5;

template <typename Scalar>
Image<Scalar> instance_norm_forward(const Image<Scalar>& x, InstanceNormCache<Scalar>* cache) {
  const Scalar n = static_cast<Scalar>(x.pixels());
  const Vector<Scalar> mean = x.data.rowwise().sum() / n;
  Matrix<Scalar> centered = x.data.colwise() - mean;
  const Vector<Scalar> var = centered.array().square().rowwise().sum() / n;
  const Vector<Scalar> inv_std = (var.array() + static_cast<Scalar>(kInstanceNormEps)).rsqrt();
  Matrix<Scalar> y = inv_std.asDiagonal() * centered;
  if (cache) {
    cache->normalized = y;
    cache->inv_std = inv_std;
  }
  return Image<Scalar>(x.height, x.width, std::move(y));
}

template <typename Scalar>
Image<Scalar> instance_norm_backward(const Image<Scalar>& dy, const InstanceNormCache<Scalar>& cache) {
  const Scalar n = static_cast<Scalar>(dy.pixels());
  const Vector<Scalar> sum_dy = dy.data.rowwise().sum();
  const Vector<Scalar> sum_dy_xhat = dy.data.cwiseProduct(cache.normalized).rowwise().sum();
  Matrix<Scalar> dx = n * dy.data;
  dx.colwise() -= sum_dy;
  dx -= (cache.normalized.array().colwise() * sum_dy_xhat.array()).matrix();
  dx = (cache.inv_std / n).asDiagonal() * dx;
  return Image<Scalar>(dy.height, dy.width, std::move(dx));
}

/// Nearest-neighbour 2x upsampling.
template <typename Scalar>
Image<Scalar> upsample2_forward(const Image<Scalar>& x) {
  Image<Scalar> y(2 * x.height, 2 * x.width, x.channels());
  for (int i = 0; i < y.height; ++i)
    for (int j = 0; j < y.width; ++j) y.data.col(i * y.width + j) = x.data.col((i / 2) * x.width + j / 2);
  return y;
}

template <typename Scalar>
Image<Scalar> upsample2_backward(const Image<Scalar>& dy) {
  Image<Scalar> dx(dy.height / 2, dy.width / 2, dy.channels());
  for (int i = 0; i < dy.height; ++i)
    for (int j = 0; j < dy.width; ++j) dx.data.col((i / 2) * dx.width + j / 2) += dy.data.col(i * dy.width + j);
  return dx;
}

/// 2x2 mean pooling; both dimensions must be even.
template <typename Scalar>
Image<Scalar> avgpool2_forward(const Image<Scalar>& x) {
  CAPIT_REQUIRE(x.height % 2 == 0 && x.width % 2 == 0, InvalidInput, "avgpool2: odd spatial size");
  Image<Scalar> y(x.height / 2, x.width / 2, x.channels());
  for (int i = 0; i < x.height; ++i)
    for (int j = 0; j < x.width; ++j) y.data.col((i / 2) * y.width + j / 2) += x.data.col(i * x.width + j);
  y.data *= static_cast<Scalar>(0.25);
  return y;
}

template <typename Scalar>
Image<Scalar> avgpool2_backward(const Image<Scalar>& dy) {
  Image<Scalar> dx(dy.height * 2, dy.width * 2, dy.channels());
  for (int i = 0; i < dx.height; ++i)
    for (int j = 0; j < dx.width; ++j)
      dx.data.col(i * dx.width + j) = static_cast<Scalar>(0.25) * dy.data.col((i / 2) * dy.width + j / 2);
  return dx;
}

}  // namespace capit::nn
