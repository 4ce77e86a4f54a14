#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "capit/losses.hpp"
#include "capit/masking.hpp"
#include "capit/models.hpp"

namespace capit {

template <typename Scalar>
struct PatchNceGrads {
  Image<Scalar> gen;                               // d loss / d gen
  nn::ParamStore<Scalar>* generator = nullptr;     // encoder parameter grads (accumulated)
  nn::ParamStore<Scalar>* heads = nullptr;         // MLP head grads (accumulated)
};

struct PatchNceDiagnostics {
  std::vector<int> locations_per_layer;
  double relu_margin = 0.0;  // smallest |pre-activation| met on the query path
};

/// Background cells usable at a feature resolution of `feat_h x feat_w`.
inline std::vector<int> nce_locations(const BinaryMask& mask, int feat_h, int feat_w, double keep_fraction) {
  CAPIT_REQUIRE(mask.height() % feat_h == 0 && mask.width() % feat_w == 0 &&
                    mask.height() / feat_h == mask.width() / feat_w,
                InvalidInput, "nce: feature map does not tile the mask");
  const BinaryMask cells = downsample_mask(mask, mask.height() / feat_h, keep_fraction);
  std::vector<int> locs;
  for (int p = 0; p < feat_h * feat_w; ++p)
    if (cells.background(p)) locs.push_back(p);
  return locs;
}

/// Masked patch contrastive loss between a translated image and its coarsely
/// aligned target.
///
/// Foreground pixels (outside `mask`) are zeroed in both images before
/// encoding, and only feature cells whose pixel block passes the
/// `keep_fraction` background test are eligible locations. At each tap layer
/// up to `patches_per_layer` eligible locations are drawn (all of them when
/// there are few enough, otherwise a uniform sample from `rng`, or an evenly
/// strided subset when `rng` is null). For each sampled location s the query
/// H_s(gen) is scored against the positive H_s(target) and the negatives
/// H_s'(target), s' != s among the sampled locations. The per-layer mean of
/// those cross-entropies is summed over layers.
///
/// Target features are treated as constants: gradients flow only through the
/// query path (into `gen`, the shared encoder, and the heads).
template <typename Scalar>
Scalar patchnce_star(const Image<Scalar>& gen, const Image<Scalar>& target, const Generator<Scalar>& G,
                     const FeatureExtractor<Scalar>& H, const BinaryMask& mask, const NCEConfig& cfg,
                     std::mt19937_64* rng = nullptr, NoDeduce<PatchNceGrads<Scalar>>* grads = nullptr,
                     PatchNceDiagnostics* diag = nullptr) {
  require_same_shape(gen, target, "patchnce_star");
  CAPIT_REQUIRE(mask.height() == gen.height && mask.width() == gen.width, InvalidInput,
                "patchnce_star: mask shape mismatch");
  CAPIT_REQUIRE(cfg.temperature > 0, InvalidInput, "patchnce_star: temperature must be positive");
  CAPIT_REQUIRE(cfg.patches_per_layer >= 2, InvalidInput, "patchnce_star: need at least 2 patches per layer");
  if (cfg.layers != H.layers()) {
    throw ConfigError("patchnce_star: config asks for " + std::to_string(cfg.layers) + " layers, extractor has " +
                      std::to_string(H.layers()));
  }

  // Zero foreground pixels so they cannot reach any feature.
  Eigen::Array<Scalar, 1, Eigen::Dynamic> keep(gen.pixels());
  for (int p = 0; p < gen.pixels(); ++p) keep[p] = mask.background(p) ? Scalar(1) : Scalar(0);
  Image<Scalar> gen_m = gen, target_m = target;
  gen_m.data = (gen.data.array().rowwise() * keep).matrix();
  target_m.data = (target.data.array().rowwise() * keep).matrix();

  nn::Trace<Scalar> trace;
  const auto& layers = H.spec.tap_layers;
  const auto q_maps = G.encode(gen_m, layers, grads ? &trace : nullptr);
  const auto k_maps = G.encode(target_m, layers);

  const Scalar tau = static_cast<Scalar>(cfg.temperature);
  Scalar total = 0;
  std::vector<Image<Scalar>> dmaps;
  if (diag) {
    diag->locations_per_layer.clear();
    diag->relu_margin = grads ? static_cast<double>(G.net.relu_margin(trace)) : 0.0;
  }

  for (int l = 0; l < H.layers(); ++l) {
    const auto& qm = q_maps[l];
    std::vector<int> locs = nce_locations(mask, qm.height, qm.width, cfg.keep_fraction);
    if (locs.size() < 2) {
      throw DegenerateInput("patchnce_star: fewer than 2 usable locations on layer " + std::to_string(l));
    }
    const auto want = static_cast<std::size_t>(cfg.patches_per_layer);
    if (locs.size() > want) {
      if (rng) {
        std::shuffle(locs.begin(), locs.end(), *rng);
        locs.resize(want);
      } else {
        std::vector<int> strided;
        for (std::size_t k = 0; k < want; ++k) strided.push_back(locs[k * locs.size() / want]);
        locs = std::move(strided);
      }
    }
    if (diag) diag->locations_per_layer.push_back(static_cast<int>(locs.size()));
    const int S = static_cast<int>(locs.size());

    Matrix<Scalar> q_in(qm.channels(), S), k_in(qm.channels(), S);
    for (int s = 0; s < S; ++s) {
      q_in.col(s) = qm.data.col(locs[s]);
      k_in.col(s) = k_maps[l].data.col(locs[s]);
    }
    typename FeatureExtractor<Scalar>::HeadCache cache;
    const Matrix<Scalar> q = H.embed(l, q_in, cfg.normalize_features, grads ? &cache : nullptr);
    const Matrix<Scalar> k = H.embed(l, k_in, cfg.normalize_features);
    if (diag && grads) {
      diag->relu_margin = std::min(diag->relu_margin, static_cast<double>(cache.hidden.cwiseAbs().minCoeff()));
    }

    // Row s: logits of query s against every sampled target location; the
    // diagonal is the positive.
    const Matrix<Scalar> logits = q.transpose() * k / tau;
    const Vector<Scalar> top = logits.rowwise().maxCoeff();
    const Matrix<Scalar> e = (logits.colwise() - top).array().exp().matrix();
    const Vector<Scalar> z = e.rowwise().sum();
    Scalar layer_loss = 0;
    for (int s = 0; s < S; ++s) layer_loss += std::log(z[s]) + top[s] - logits(s, s);
    total += layer_loss / static_cast<Scalar>(S);

    if (grads) {
      Matrix<Scalar> dlogits = z.cwiseInverse().asDiagonal() * e;
      dlogits.diagonal().array() -= 1;
      dlogits /= static_cast<Scalar>(S);
      const Matrix<Scalar> dq = k * dlogits.transpose() / tau;
      const Matrix<Scalar> dq_in = H.embed_backward(l, cache, q, dq, cfg.normalize_features, grads->heads);
      Image<Scalar> dmap(qm.height, qm.width, qm.channels());
      for (int s = 0; s < S; ++s) dmap.data.col(locs[s]) += dq_in.col(s);
      dmaps.push_back(std::move(dmap));
    }
  }

  if (grads) {
    Image<Scalar> dgen_m = G.encode_backward(trace, layers, dmaps, grads->generator);
    grads->gen = dgen_m;
    grads->gen.data = (dgen_m.data.array().rowwise() * keep).matrix();
  }
  return total;
}

}  // namespace capit
