#pragma once

// Reconstruction, contrastive, and adversarial loss terms for coarsely-aligned
// paired translation. Every differentiable term returns its value and, when a
// gradient pointer is supplied, writes d(loss)/d(input) into it (overwriting).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "capit/error.hpp"
#include "capit/masking.hpp"
#include "capit/tensor.hpp"

namespace capit {

template <typename T>
using NoDeduce = std::type_identity_t<T>;

struct WindowSpec {
  int k_h = 3;
  int k_w = 3;

  static WindowSpec square(int k) { return {k, k}; }
};

struct NCEConfig {
  double temperature = 0.07;
  int layers = 3;
  int patches_per_layer = 64;
  bool normalize_features = true;
  double keep_fraction = 1.0;  // feature-cell masking rule, see downsample_mask
};

enum class GanMode { unpaired, conditional, paired };
enum class GanForm { cross_entropy, least_squares };

struct ObjectiveWeights {
  double lambda_l1 = 10.0;
  double lambda_nce = 1.0;
  GanMode gan_mode = GanMode::unpaired;
  GanForm gan_form = GanForm::least_squares;
};

std::string to_string(GanMode m);
std::string to_string(GanForm f);
GanMode parse_gan_mode(const std::string& s);
GanForm parse_gan_form(const std::string& s);

// ---------------------------------------------------------------------------
// Plain L1

/// Mean absolute difference over all pixels and channels.
template <typename Scalar>
Scalar l1_plain(const Image<Scalar>& gen, const Image<Scalar>& target, NoDeduce<Image<Scalar>>* grad = nullptr) {
  require_same_shape(gen, target, "l1_plain");
  const auto diff = (gen.data - target.data).array();
  const Scalar n = static_cast<Scalar>(gen.data.size());
  if (grad) *grad = Image<Scalar>(gen.height, gen.width, (diff.sign() / n).matrix());
  return diff.abs().sum() / n;
}

// ---------------------------------------------------------------------------
// Misalignment-tolerating L1

/// In-bounds coordinates (a, b) with |a - i| <= k_h and |b - j| <= k_w, in
/// row-major order.
std::vector<std::pair<int, int>> window_indices(int i, int j, const WindowSpec& spec, int height, int width);

/// Per-pixel correspondences chosen by the windowed minimum.
struct WindowMatch {
  std::vector<int> source_of;  // flat target index matched to each gen pixel, -1 if not counted
  int counted = 0;
};

namespace detail {

// Core of both windowed losses. For each counted gen pixel p the target pixel
// q in the window (restricted to `mask` when given) minimising the
// channel-summed |gen(p) - target(q)| is selected; ties keep the first q in
// row-major order. Evaluated one window offset at a time over whole row
// segments so the inner loop is a vectorised channel reduction.
template <typename Scalar>
Scalar windowed_l1(const Image<Scalar>& gen, const Image<Scalar>& target, const WindowSpec& spec,
                   const BinaryMask* mask, Image<Scalar>* grad, WindowMatch* match) {
  const int h = gen.height, w = gen.width;
  CAPIT_REQUIRE(spec.k_h >= 0 && spec.k_w >= 0, InvalidInput, "window half-sizes must be non-negative");
  if (mask) {
    CAPIT_REQUIRE(mask->height() == h && mask->width() == w, InvalidInput, "l1_star: mask shape mismatch");
    if (mask->background_count() == 0) throw DegenerateInput("l1_star: mask has no background pixels");
  }
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  Eigen::Array<Scalar, 1, Eigen::Dynamic> best = Eigen::Array<Scalar, 1, Eigen::Dynamic>::Constant(h * w, inf);
  std::vector<int> arg(static_cast<std::size_t>(h) * w, -1);

  for (int da = -spec.k_h; da <= spec.k_h; ++da) {
    for (int db = -spec.k_w; db <= spec.k_w; ++db) {
      const int j0 = std::max(0, -db), j1 = std::min(w, w - db);
      if (j1 <= j0) continue;
      for (int i = std::max(0, -da); i < std::min(h, h - da); ++i) {
        const int p0 = i * w + j0, q0 = (i + da) * w + j0 + db, n = j1 - j0;
        const Eigen::Array<Scalar, 1, Eigen::Dynamic> cost =
            (gen.data.middleCols(p0, n) - target.data.middleCols(q0, n)).cwiseAbs().colwise().sum().array();
        for (int t = 0; t < n; ++t) {
          if (mask && !(mask->background(p0 + t) && mask->background(q0 + t))) continue;
          // Offsets are visited in row-major order of the candidate, so a
          // strict comparison keeps the first minimiser.
          if (cost[t] < best[p0 + t]) {
            best[p0 + t] = cost[t];
            arg[p0 + t] = q0 + t;
          }
        }
      }
    }
  }

  Scalar total = 0;
  int counted = 0;
  for (int p = 0; p < h * w; ++p) {
    if (arg[p] < 0) continue;
    total += best[p];
    ++counted;
  }
  if (counted == 0) throw DegenerateInput("windowed L1: no pixel has a usable candidate");
  const Scalar norm = static_cast<Scalar>(counted);

  if (grad) {
    *grad = Image<Scalar>(h, w, gen.channels());
    for (int p = 0; p < h * w; ++p) {
      if (arg[p] < 0) continue;
      grad->data.col(p) = (gen.data.col(p) - target.data.col(arg[p])).array().sign().matrix() / norm;
    }
  }
  if (match) {
    match->counted = counted;
    match->source_of = std::move(arg);
  }
  return total / norm;
}

}  // namespace detail

/// Mean over all h*w pixels of the channel-summed absolute difference to the
/// best-matching target pixel inside the clipped window.
template <typename Scalar>
Scalar l1_misalign(const Image<Scalar>& gen, const Image<Scalar>& target, const WindowSpec& spec,
                   NoDeduce<Image<Scalar>>* grad = nullptr, WindowMatch* match = nullptr) {
  require_same_shape(gen, target, "l1_misalign");
  return detail::windowed_l1<Scalar>(gen, target, spec, nullptr, grad, match);
}

/// Foreground-masked variant: query pixels and window candidates are both
/// restricted to background; normalised by the number of counted pixels.
template <typename Scalar>
Scalar l1_star(const Image<Scalar>& gen, const Image<Scalar>& target, const BinaryMask& mask,
               const WindowSpec& spec, NoDeduce<Image<Scalar>>* grad = nullptr, WindowMatch* match = nullptr) {
  require_same_shape(gen, target, "l1_star");
  return detail::windowed_l1<Scalar>(gen, target, spec, &mask, grad, match);
}

/// Masked mean absolute difference (the "L1 (+mask)" ablation term): mean over
/// background pixels of the channel-summed |gen - target|, i.e. l1_star with k = 0.
template <typename Scalar>
Scalar l1_masked(const Image<Scalar>& gen, const Image<Scalar>& target, const BinaryMask& mask,
                 NoDeduce<Image<Scalar>>* grad = nullptr) {
  return l1_star(gen, target, mask, WindowSpec{0, 0}, grad);
}

// ---------------------------------------------------------------------------
// Contrastive cross-entropy

template <typename Scalar>
struct NceGrad {
  Vector<Scalar> query;
  Vector<Scalar> positive;
  Matrix<Scalar> negatives;  // dim x N
};

/// -log softmax of q.v+ / tau against {q.v- / tau}; negatives are columns.
template <typename Scalar>
Scalar nce_cross_entropy(const Eigen::Ref<const Vector<Scalar>>& query,
                         const Eigen::Ref<const Vector<Scalar>>& positive,
                         const Eigen::Ref<const Matrix<Scalar>>& negatives, Scalar temperature,
                         NceGrad<Scalar>* grad = nullptr) {
  CAPIT_REQUIRE(negatives.cols() > 0, InvalidInput, "nce_cross_entropy: negatives must be non-empty");
  CAPIT_REQUIRE(query.size() == positive.size() && negatives.rows() == query.size(), InvalidInput,
                "nce_cross_entropy: dimension mismatch");
  CAPIT_REQUIRE(temperature > 0, InvalidInput, "nce_cross_entropy: temperature must be positive");
  const Scalar pos = query.dot(positive) / temperature;
  const Vector<Scalar> neg = negatives.transpose() * query / temperature;
  const Scalar top = std::max(pos, neg.maxCoeff());
  const Scalar e_pos = std::exp(pos - top);
  const Vector<Scalar> e_neg = (neg.array() - top).exp().matrix();
  const Scalar z = e_pos + e_neg.sum();
  const Scalar loss = std::log(z) + top - pos;
  if (grad) {
    const Scalar s_pos = e_pos / z;
    const Vector<Scalar> s_neg = e_neg / z;
    grad->query = ((s_pos - 1) * positive + negatives * s_neg) / temperature;
    grad->positive = (s_pos - 1) / temperature * query;
    grad->negatives = query * s_neg.transpose() / temperature;
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Adversarial terms on prediction maps

/// Discriminator value on probability/score maps.
///  cross-entropy: mean log D(real) + mean log(1 - D(fake))   (D maximises)
///  least-squares: mean (D(real) - 1)^2 + mean D(fake)^2        (D minimises)
template <typename Scalar>
Scalar gan_loss_d(const Matrix<Scalar>& d_real, const Matrix<Scalar>& d_fake, GanForm form,
                  Matrix<Scalar>* grad_real = nullptr, Matrix<Scalar>* grad_fake = nullptr) {
  CAPIT_REQUIRE(d_real.allFinite() && d_fake.allFinite(), InvalidInput, "gan_loss_d: non-finite prediction");
  const Scalar nr = static_cast<Scalar>(d_real.size()), nf = static_cast<Scalar>(d_fake.size());
  if (form == GanForm::cross_entropy) {
    CAPIT_REQUIRE((d_real.array() > 0).all() && (d_real.array() < 1).all() && (d_fake.array() > 0).all() &&
                      (d_fake.array() < 1).all(),
                  InvalidInput, "gan_loss_d: cross-entropy form needs predictions in (0, 1)");
    if (grad_real) *grad_real = (d_real.array().inverse() / nr).matrix();
    if (grad_fake) *grad_fake = (-(1 - d_fake.array()).inverse() / nf).matrix();
    return d_real.array().log().sum() / nr + (1 - d_fake.array()).log().sum() / nf;
  }
  if (grad_real) *grad_real = (2 * (d_real.array() - 1) / nr).matrix();
  if (grad_fake) *grad_fake = (2 * d_fake.array() / nf).matrix();
  return (d_real.array() - 1).square().sum() / nr + d_fake.array().square().sum() / nf;
}

/// Generator term, minimised by G: -mean log D(fake) (non-saturating) or
/// mean (D(fake) - 1)^2.
template <typename Scalar>
Scalar gan_loss_g(const Matrix<Scalar>& d_fake, GanForm form, Matrix<Scalar>* grad_fake = nullptr) {
  CAPIT_REQUIRE(d_fake.allFinite(), InvalidInput, "gan_loss_g: non-finite prediction");
  const Scalar n = static_cast<Scalar>(d_fake.size());
  if (form == GanForm::cross_entropy) {
    CAPIT_REQUIRE((d_fake.array() > 0).all() && (d_fake.array() < 1).all(), InvalidInput,
                  "gan_loss_g: cross-entropy form needs predictions in (0, 1)");
    if (grad_fake) *grad_fake = (-d_fake.array().inverse() / n).matrix();
    return -d_fake.array().log().sum() / n;
  }
  if (grad_fake) *grad_fake = (2 * (d_fake.array() - 1) / n).matrix();
  return (d_fake.array() - 1).square().sum() / n;
}

namespace detail {
template <typename Scalar>
Scalar softplus(Scalar x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return x >= 0 ? 1 / (1 + std::exp(-x)) : std::exp(x) / (1 + std::exp(x));
}
}  // namespace detail

/// Descent-form D loss on raw discriminator outputs. For cross-entropy the raw
/// output is a logit and the result equals -gan_loss_d(sigmoid(real),
/// sigmoid(fake)), evaluated without forming the probabilities; for
/// least-squares it equals gan_loss_d on the raw outputs.
template <typename Scalar>
Scalar gan_d_descent(const Matrix<Scalar>& real_raw, const Matrix<Scalar>& fake_raw, GanForm form,
                     Matrix<Scalar>* grad_real = nullptr, Matrix<Scalar>* grad_fake = nullptr) {
  if (form == GanForm::least_squares) return gan_loss_d(real_raw, fake_raw, form, grad_real, grad_fake);
  CAPIT_REQUIRE(real_raw.allFinite() && fake_raw.allFinite(), InvalidInput, "gan_d_descent: non-finite logit");
  const Scalar nr = static_cast<Scalar>(real_raw.size()), nf = static_cast<Scalar>(fake_raw.size());
  using detail::sigmoid;
  using detail::softplus;
  if (grad_real) *grad_real = real_raw.unaryExpr([&](Scalar z) { return (sigmoid(z) - 1) / nr; });
  if (grad_fake) *grad_fake = fake_raw.unaryExpr([&](Scalar z) { return sigmoid(z) / nf; });
  return real_raw.unaryExpr([](Scalar z) { return softplus(-z); }).sum() / nr +
         fake_raw.unaryExpr([](Scalar z) { return softplus(z); }).sum() / nf;
}

/// G loss on raw discriminator outputs; equals gan_loss_g(sigmoid(fake)) for
/// cross-entropy.
template <typename Scalar>
Scalar gan_g_descent(const Matrix<Scalar>& fake_raw, GanForm form, Matrix<Scalar>* grad_fake = nullptr) {
  if (form == GanForm::least_squares) return gan_loss_g(fake_raw, form, grad_fake);
  CAPIT_REQUIRE(fake_raw.allFinite(), InvalidInput, "gan_g_descent: non-finite logit");
  const Scalar n = static_cast<Scalar>(fake_raw.size());
  using detail::sigmoid;
  using detail::softplus;
  if (grad_fake) *grad_fake = fake_raw.unaryExpr([&](Scalar z) { return (sigmoid(z) - 1) / n; });
  return fake_raw.unaryExpr([](Scalar z) { return softplus(-z); }).sum() / n;
}

// ---------------------------------------------------------------------------
// Discriminator feeding

template <typename Scalar>
struct DiscriminatorBatch {
  std::vector<Image<Scalar>> real;  // D inputs for the real side
  std::vector<Image<Scalar>> fake;  // D inputs for the fake side
  bool conditioned = false;         // inputs carry realA in their leading channels
};

/// conditional: (realA|realB, realA|G(realA)); paired: (realB, G(realA));
/// unpaired: (realB', G(realA)). An empty `realB_prime` means "not supplied".
template <typename Scalar>
DiscriminatorBatch<Scalar> discriminator_batch(GanMode mode, std::span<const Image<Scalar>> realA,
                                               std::span<const Image<Scalar>> realB,
                                               std::span<const Image<Scalar>> realB_prime,
                                               std::span<const Image<Scalar>> gen_out) {
  CAPIT_REQUIRE(gen_out.size() == realA.size(), InvalidInput, "discriminator_batch: batch size mismatch");
  DiscriminatorBatch<Scalar> out;
  out.fake.assign(gen_out.begin(), gen_out.end());
  switch (mode) {
    case GanMode::conditional:
      CAPIT_REQUIRE(realB.size() == realA.size(), InvalidInput, "discriminator_batch: realB size mismatch");
      out.conditioned = true;
      for (std::size_t n = 0; n < realA.size(); ++n) {
        out.real.push_back(concat_channels(realA[n], realB[n]));
        out.fake[n] = concat_channels(realA[n], gen_out[n]);
      }
      break;
    case GanMode::paired:
      CAPIT_REQUIRE(realB.size() == realA.size(), InvalidInput, "discriminator_batch: realB size mismatch");
      out.real.assign(realB.begin(), realB.end());
      break;
    case GanMode::unpaired:
      if (realB_prime.empty()) throw InvalidInput("discriminator_batch: unpaired mode needs realB'");
      out.real.assign(realB_prime.begin(), realB_prime.end());
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Combined objective

template <typename Scalar>
struct LossTerms {
  Scalar gan_d = 0;  // D descent loss
  Scalar gan_g = 0;
  Scalar l1 = 0;
  Scalar nce = 0;
  Scalar total = 0;
};

/// gan_g + lambda_l1 * l1 + lambda_nce * nce
template <typename Scalar>
Scalar capit_objective(Scalar gan_g, Scalar l1, Scalar nce, const ObjectiveWeights& weights) {
  return gan_g + static_cast<Scalar>(weights.lambda_l1) * l1 + static_cast<Scalar>(weights.lambda_nce) * nce;
}

}  // namespace capit
