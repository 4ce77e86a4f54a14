#pragma once

#include <random>
#include <string>
#include <vector>

#include "capit/tensor.hpp"

namespace capit::nn {

/// Ordered, named collection of parameter matrices. Gradients and optimizer
/// moments are stores of identical layout (`zeros_like`).
template <typename Scalar>
class ParamStore {
 public:
  int add(std::string name, Matrix<Scalar> value) {
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return static_cast<int>(values_.size()) - 1;
  }

  int size() const { return static_cast<int>(values_.size()); }
  const std::string& name(int k) const { return names_[k]; }
  Matrix<Scalar>& operator[](int k) { return values_[k]; }
  const Matrix<Scalar>& operator[](int k) const { return values_[k]; }

  long long scalar_count() const {
    long long n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  ParamStore zeros_like() const {
    ParamStore out;
    for (int k = 0; k < size(); ++k) out.add(names_[k], Matrix<Scalar>::Zero(values_[k].rows(), values_[k].cols()));
    return out;
  }

  void set_zero() {
    for (auto& v : values_) v.setZero();
  }

  ParamStore& operator+=(const ParamStore& o) {
    for (int k = 0; k < size(); ++k) values_[k] += o.values_[k];
    return *this;
  }

  ParamStore& operator*=(Scalar s) {
    for (auto& v : values_) v *= s;
    return *this;
  }

  Scalar squared_norm() const {
    Scalar n = 0;
    for (const auto& v : values_) n += v.squaredNorm();
    return n;
  }

  bool all_finite() const {
    for (const auto& v : values_)
      if (!v.allFinite()) return false;
    return true;
  }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (int k = 0; k < size(); ++k) out.add(names_[k], values_[k].template cast<Other>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix<Scalar>> values_;
};

/// N(0, std) initialisation drawn from a 64-bit Mersenne twister. Draws are
/// made in double and cast so float and double models built from the same
/// seed hold the same values up to rounding.
template <typename Scalar>
Matrix<Scalar> normal_init(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix<Scalar> m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = static_cast<Scalar>(dist(rng));
  return m;
}

}  // namespace capit::nn
