#pragma once

// Independent reference computations for the test suites. Nothing here calls
// into the optimised implementations it is used to check.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "capit/masking.hpp"
#include "capit/tensor.hpp"

namespace capit::oracle {

inline Image<double> random_image(int h, int w, int c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image<double> img(h, w, c);
  for (int p = 0; p < h * w; ++p)
    for (int ch = 0; ch < c; ++ch) img.data(ch, p) = u(rng);
  return img;
}

inline BinaryMask random_mask(int h, int w, double p_bg, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p_bg);
  BoolGrid g(h, w);
  for (int k = 0; k < h * w; ++k) g.data()[k] = b(rng);
  return BinaryMask(g);
}

/// Direct double loop: for each (counted) pixel, the minimum over the clipped
/// window (restricted to background when masked) of the channel-summed
/// absolute difference; mean over counted pixels.
inline double windowed_l1(const Image<double>& gen, const Image<double>& tgt, int kh, int kw,
                          const BinaryMask* mask = nullptr) {
  double total = 0.0;
  int counted = 0;
  for (int i = 0; i < gen.height; ++i) {
    for (int j = 0; j < gen.width; ++j) {
      if (mask && !mask->background(i, j)) continue;
      double best = std::numeric_limits<double>::infinity();
      for (int a = 0; a < gen.height; ++a) {
        for (int b = 0; b < gen.width; ++b) {
          if (std::abs(a - i) > kh || std::abs(b - j) > kw) continue;
          if (mask && !mask->background(a, b)) continue;
          double cost = 0.0;
          for (int c = 0; c < gen.channels(); ++c) cost += std::abs(gen.at(i, j, c) - tgt.at(a, b, c));
          best = std::min(best, cost);
        }
      }
      if (best < std::numeric_limits<double>::infinity()) {
        total += best;
        ++counted;
      }
    }
  }
  return total / counted;
}

/// True when every counted pixel has a unique minimiser separated from the
/// runner-up by more than `margin`, and every channel difference at the
/// minimiser exceeds `margin` in magnitude (so +/-h perturbations cannot
/// switch branches).
inline bool windowed_l1_smooth(const Image<double>& gen, const Image<double>& tgt, int kh, int kw,
                               const BinaryMask* mask, double margin) {
  for (int i = 0; i < gen.height; ++i) {
    for (int j = 0; j < gen.width; ++j) {
      if (mask && !mask->background(i, j)) continue;
      double best = std::numeric_limits<double>::infinity(), second = best;
      int bi = -1, bj = -1;
      for (int a = std::max(0, i - kh); a <= std::min(gen.height - 1, i + kh); ++a) {
        for (int b = std::max(0, j - kw); b <= std::min(gen.width - 1, j + kw); ++b) {
          if (mask && !mask->background(a, b)) continue;
          double cost = 0.0;
          for (int c = 0; c < gen.channels(); ++c) cost += std::abs(gen.at(i, j, c) - tgt.at(a, b, c));
          if (cost < best) {
            second = best;
            best = cost;
            bi = a;
            bj = b;
          } else if (cost < second) {
            second = cost;
          }
        }
      }
      if (second - best <= margin) return false;
      for (int c = 0; c < gen.channels(); ++c)
        if (std::abs(gen.at(i, j, c) - tgt.at(bi, bj, c)) <= margin) return false;
    }
  }
  return true;
}

/// Central finite differences of a scalar function of an image.
inline Image<double> numeric_gradient(const std::function<double(const Image<double>&)>& f, Image<double> x,
                                      double step = 1e-5) {
  Image<double> g(x.height, x.width, x.channels());
  for (Eigen::Index k = 0; k < x.data.size(); ++k) {
    const double v = x.data.data()[k];
    x.data.data()[k] = v + step;
    const double up = f(x);
    x.data.data()[k] = v - step;
    const double down = f(x);
    x.data.data()[k] = v;
    g.data.data()[k] = (up - down) / (2 * step);
  }
  return g;
}

inline Eigen::MatrixXd numeric_gradient(const std::function<double(const Eigen::MatrixXd&)>& f, Eigen::MatrixXd x,
                                        double step = 1e-5) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double v = x.data()[k];
    x.data()[k] = v + step;
    const double up = f(x);
    x.data()[k] = v - step;
    const double down = f(x);
    x.data()[k] = v;
    g.data()[k] = (up - down) / (2 * step);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, floor); 0 when both vanish. The floor keeps
/// analytically-zero gradients (e.g. a bias feeding instance norm) from
/// comparing finite-difference noise against itself.
inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 0.0) {
  const double scale = std::max({a.norm(), b.norm(), floor});
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

/// Fréchet distance of 2-D Gaussians by closed forms: for 2x2 matrices with
/// positive eigenvalues l1, l2 of Sa*Sb,
/// tr sqrt(Sa Sb) = sqrt(tr(Sa Sb) + 2 sqrt(det Sa det Sb)).
inline double frechet_2d(const Eigen::Vector2d& ma, const Eigen::Matrix2d& sa, const Eigen::Vector2d& mb,
                         const Eigen::Matrix2d& sb) {
  const double tr_sqrt = std::sqrt((sa * sb).trace() + 2.0 * std::sqrt(sa.determinant() * sb.determinant()));
  return (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
}

inline double frechet_1d(double ma, double va, double mb, double vb) {
  return (ma - mb) * (ma - mb) + va + vb - 2.0 * std::sqrt(va * vb);
}

}  // namespace capit::oracle
