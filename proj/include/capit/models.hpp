#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "capit/error.hpp"
#include "capit/nn/network.hpp"
#include "capit/nn/params.hpp"
#include "capit/tensor.hpp"

namespace capit {

struct GeneratorSpec {
  int in_channels = 3;
  int out_channels = 3;
  int base_channels = 32;
  int downsample_stages = 2;
  int residual_blocks = 4;
};

struct DiscriminatorSpec {
  int scales = 2;
  int base_channels = 32;
  int image_channels = 3;
  int conditioning_channels = 0;  // 3 when D sees realA alongside the image

  int input_channels() const { return image_channels + conditioning_channels; }
};

struct FeatureExtractorSpec {
  std::vector<int> tap_layers;  // encoder layer indices: 0 = stem, s = after downsample s
  int embed_dim = 64;

  /// Stem plus every downsample stage.
  static FeatureExtractorSpec all_layers(const GeneratorSpec& g, int embed_dim = 64) {
    FeatureExtractorSpec s;
    for (int l = 0; l <= g.downsample_stages; ++l) s.tap_layers.push_back(l);
    s.embed_dim = embed_dim;
    return s;
  }
};

inline constexpr double kInitStd = 0.02;

namespace detail {
template <typename Scalar>
nn::Node conv_node(nn::ParamStore<Scalar>& params, const std::string& name, int cin, int cout,
                   nn::ConvGeometry g, std::mt19937_64& rng) {
  nn::Node n;
  n.op = nn::Op::conv;
  n.geometry = g;
  n.weight = params.add(name + ".w", nn::normal_init<Scalar>(cout, cin * g.kernel * g.kernel, kInitStd, rng));
  n.bias = params.add(name + ".b", Matrix<Scalar>::Zero(cout, 1));
  return n;
}
inline nn::Node op_node(nn::Op op, double slope = 0.2) {
  nn::Node n;
  n.op = op;
  n.slope = slope;
  return n;
}
}  // namespace detail

/// Encoder / residual / decoder translator with a tanh output:
///   conv7 -> [conv3 stride 2]xS -> residual x R -> [upsample, conv3]xS -> conv7 -> tanh
/// with instance normalisation and ReLU after every hidden conv.
template <typename Scalar>
class Generator {
 public:
  GeneratorSpec spec;
  nn::ParamStore<Scalar> params;
  nn::Sequential<Scalar> net;
  std::vector<int> encoder_taps;  // node index whose output is encoder layer l

  Generator() = default;
  Generator(const GeneratorSpec& s, std::uint64_t seed) : spec(s) {
    CAPIT_REQUIRE(s.base_channels > 0 && s.downsample_stages > 0 && s.residual_blocks >= 0, ConfigError,
                  "invalid generator spec");
    std::mt19937_64 rng(seed);
    using detail::conv_node;
    using detail::op_node;
    auto& nodes = net.nodes;
    auto push_block = [&](nn::Node conv) {
      nodes.push_back(std::move(conv));
      nodes.push_back(op_node(nn::Op::instance_norm));
      nodes.push_back(op_node(nn::Op::relu));
    };
    int ch = s.base_channels;
    push_block(conv_node(params, "stem", s.in_channels, ch, {7, 1, 3}, rng));
    encoder_taps.push_back(static_cast<int>(nodes.size()) - 1);
    for (int d = 0; d < s.downsample_stages; ++d) {
      push_block(conv_node(params, "down" + std::to_string(d), ch, ch * 2, {3, 2, 1}, rng));
      ch *= 2;
      encoder_taps.push_back(static_cast<int>(nodes.size()) - 1);
    }
    for (int r = 0; r < s.residual_blocks; ++r) {
      nn::Node res = op_node(nn::Op::residual);
      const std::string name = "res" + std::to_string(r);
      res.body.push_back(conv_node(params, name + ".a", ch, ch, {3, 1, 1}, rng));
      res.body.push_back(op_node(nn::Op::instance_norm));
      res.body.push_back(op_node(nn::Op::relu));
      res.body.push_back(conv_node(params, name + ".b", ch, ch, {3, 1, 1}, rng));
      res.body.push_back(op_node(nn::Op::instance_norm));
      nodes.push_back(std::move(res));
    }
    for (int u = 0; u < s.downsample_stages; ++u) {
      nodes.push_back(op_node(nn::Op::upsample2));
      push_block(conv_node(params, "up" + std::to_string(u), ch, ch / 2, {3, 1, 1}, rng));
      ch /= 2;
    }
    nodes.push_back(conv_node(params, "out", ch, s.out_channels, {7, 1, 3}, rng));
    nodes.push_back(op_node(nn::Op::tanh));
  }

  int divisor() const { return 1 << spec.downsample_stages; }
  int encoder_layers() const { return static_cast<int>(encoder_taps.size()); }

  void check_input(const Image<Scalar>& x) const {
    if (x.channels() != spec.in_channels) throw InvalidInput("generator: channel count mismatch");
    if (x.height % divisor() != 0 || x.width % divisor() != 0) {
      throw InvalidInput("generator: image size must be divisible by " + std::to_string(divisor()));
    }
  }

  Image<Scalar> forward(const Image<Scalar>& x, nn::Trace<Scalar>* trace = nullptr) const {
    check_input(x);
    return net.forward(params, x, trace);
  }

  /// Input gradient is skipped unless requested (G's input is data).
  Image<Scalar> backward(const nn::Trace<Scalar>& trace, const Image<Scalar>& dy, nn::ParamStore<Scalar>* grads,
                         bool need_input_grad = false) const {
    return net.backward(params, trace, dy, grads, {}, need_input_grad);
  }

  /// Runs the encoder up to the deepest requested layer; returns the feature
  /// map of each requested layer.
  std::vector<Image<Scalar>> encode(const Image<Scalar>& x, const std::vector<int>& layers,
                                    nn::Trace<Scalar>* trace = nullptr) const {
    check_input(x);
    int deepest = 0;
    for (int l : layers) {
      if (l < 0 || l >= encoder_layers()) throw ConfigError("invalid encoder tap layer " + std::to_string(l));
      deepest = std::max(deepest, l);
    }
    nn::Trace<Scalar> local;
    nn::Trace<Scalar>& t = trace ? *trace : local;
    net.forward(params, x, &t, encoder_taps[deepest] + 1);
    std::vector<Image<Scalar>> out;
    for (int l : layers) out.push_back(t.output_of(encoder_taps[l]));
    return out;
  }

  /// Back-propagates gradients on encoder layer outputs to the input image.
  Image<Scalar> encode_backward(const nn::Trace<Scalar>& trace, const std::vector<int>& layers,
                                const std::vector<Image<Scalar>>& dfeatures, nn::ParamStore<Scalar>* grads) const {
    std::vector<std::pair<int, Image<Scalar>>> taps;
    for (std::size_t k = 0; k < layers.size(); ++k) taps.emplace_back(encoder_taps[layers[k]], dfeatures[k]);
    return net.backward(params, trace, Image<Scalar>(), grads, taps, true);
  }
};

template <typename Scalar>
struct DiscriminatorTrace {
  std::vector<Image<Scalar>> inputs;  // per-scale (pooled) inputs
  std::vector<nn::Trace<Scalar>> traces;
};

/// Multi-scale patch discriminator. Scale s sees the input average-pooled s
/// times and emits a raw score map (logits for the cross-entropy form).
template <typename Scalar>
class Discriminator {
 public:
  DiscriminatorSpec spec;
  nn::ParamStore<Scalar> params;
  std::vector<nn::Sequential<Scalar>> nets;

  Discriminator() = default;
  Discriminator(const DiscriminatorSpec& s, std::uint64_t seed) : spec(s) {
    CAPIT_REQUIRE(s.scales > 0 && s.base_channels > 0, ConfigError, "invalid discriminator spec");
    std::mt19937_64 rng(seed);
    using detail::conv_node;
    using detail::op_node;
    for (int sc = 0; sc < s.scales; ++sc) {
      const std::string p = "s" + std::to_string(sc) + ".";
      nn::Sequential<Scalar> net;
      const int c = s.base_channels;
      net.nodes.push_back(conv_node(params, p + "c0", s.input_channels(), c, {4, 2, 1}, rng));
      net.nodes.push_back(op_node(nn::Op::leaky_relu, 0.2));
      net.nodes.push_back(conv_node(params, p + "c1", c, 2 * c, {4, 2, 1}, rng));
      net.nodes.push_back(op_node(nn::Op::instance_norm));
      net.nodes.push_back(op_node(nn::Op::leaky_relu, 0.2));
      net.nodes.push_back(conv_node(params, p + "out", 2 * c, 1, {3, 1, 1}, rng));
      nets.push_back(std::move(net));
    }
  }

  std::vector<Image<Scalar>> forward(const Image<Scalar>& x, DiscriminatorTrace<Scalar>* trace = nullptr) const {
    if (x.channels() != spec.input_channels()) {
      throw InvalidInput("discriminator: expected " + std::to_string(spec.input_channels()) + " channels, got " +
                         std::to_string(x.channels()));
    }
    const int need = 4 << (spec.scales - 1);
    if (x.height % need != 0 || x.width % need != 0) {
      throw InvalidInput("discriminator: image size must be divisible by " + std::to_string(need));
    }
    std::vector<Image<Scalar>> maps;
    if (trace) {
      trace->inputs.clear();
      trace->traces.assign(spec.scales, nn::Trace<Scalar>());
    }
    Image<Scalar> cur = x;
    for (int sc = 0; sc < spec.scales; ++sc) {
      if (sc > 0) cur = nn::avgpool2_forward(cur);
      if (trace) trace->inputs.push_back(cur);
      maps.push_back(nets[sc].forward(params, cur, trace ? &trace->traces[sc] : nullptr));
    }
    return maps;
  }

  Image<Scalar> backward(const DiscriminatorTrace<Scalar>& trace, const std::vector<Image<Scalar>>& dmaps,
                         nn::ParamStore<Scalar>* grads, bool need_input_grad = true) const {
    Image<Scalar> carry;
    for (int sc = spec.scales - 1; sc >= 0; --sc) {
      Image<Scalar> g = nets[sc].backward(params, trace.traces[sc], dmaps[sc], grads, {}, need_input_grad);
      if (!need_input_grad) continue;
      if (carry.data.size() != 0) g.data += carry.data;
      carry = sc > 0 ? nn::avgpool2_backward(g) : g;
    }
    return carry;
  }
};

/// Patch feature extractor: encoder layers of a Generator followed by a
/// per-layer two-layer MLP (linear, ReLU, linear) applied at each location.
template <typename Scalar>
class FeatureExtractor {
 public:
  FeatureExtractorSpec spec;
  nn::ParamStore<Scalar> params;
  struct Head {
    int w1, b1, w2, b2;
  };
  std::vector<Head> heads;

  FeatureExtractor() = default;
  FeatureExtractor(const FeatureExtractorSpec& s, const GeneratorSpec& g, std::uint64_t seed) : spec(s) {
    CAPIT_REQUIRE(!s.tap_layers.empty() && s.embed_dim > 0, ConfigError, "invalid feature extractor spec");
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < s.tap_layers.size(); ++k) {
      const int l = s.tap_layers[k];
      if (l < 0 || l > g.downsample_stages) throw ConfigError("invalid tap layer " + std::to_string(l));
      const int c = g.base_channels << l;
      const std::string p = "head" + std::to_string(k) + ".";
      Head h;
      h.w1 = params.add(p + "w1", nn::normal_init<Scalar>(s.embed_dim, c, kInitStd, rng));
      h.b1 = params.add(p + "b1", Matrix<Scalar>::Zero(s.embed_dim, 1));
      h.w2 = params.add(p + "w2", nn::normal_init<Scalar>(s.embed_dim, s.embed_dim, kInitStd, rng));
      h.b2 = params.add(p + "b2", Matrix<Scalar>::Zero(s.embed_dim, 1));
      heads.push_back(h);
    }
  }

  int layers() const { return static_cast<int>(heads.size()); }

  struct HeadCache {
    Matrix<Scalar> input;   // C x S
    Matrix<Scalar> hidden;  // pre-ReLU, E x S
    Matrix<Scalar> raw;     // pre-normalisation, E x S
    Vector<Scalar> norms;
  };

  /// Embeds columns `x` (C x S) through head k; columns unit-normalised when asked.
  Matrix<Scalar> embed(int k, const Matrix<Scalar>& x, bool normalize, HeadCache* cache = nullptr) const {
    const Head& h = heads[k];
    Matrix<Scalar> hidden = params[h.w1] * x;
    hidden.colwise() += params[h.b1].col(0);
    Matrix<Scalar> raw = params[h.w2] * hidden.cwiseMax(Scalar(0));
    raw.colwise() += params[h.b2].col(0);
    Matrix<Scalar> out = raw;
    Vector<Scalar> norms;
    if (normalize) {
      norms = raw.colwise().norm().transpose().cwiseMax(static_cast<Scalar>(1e-12));
      out = raw * norms.cwiseInverse().asDiagonal();
    }
    if (cache) *cache = {x, std::move(hidden), std::move(raw), std::move(norms)};
    return out;
  }

  /// Gradient of `dout` back to the head input; head parameter gradients are
  /// accumulated into `grads` when non-null.
  Matrix<Scalar> embed_backward(int k, const HeadCache& cache, const Matrix<Scalar>& out, Matrix<Scalar> dout,
                                bool normalize, nn::ParamStore<Scalar>* grads) const {
    const Head& h = heads[k];
    if (normalize) {
      // d(z/|z|) = (I - q q^T) dz / |z|
      const Eigen::Array<Scalar, 1, Eigen::Dynamic> dots = out.cwiseProduct(dout).colwise().sum().array();
      dout = (dout - out * dots.matrix().asDiagonal()) * cache.norms.cwiseInverse().asDiagonal();
    }
    const Matrix<Scalar> act = cache.hidden.cwiseMax(Scalar(0));
    if (grads) {
      (*grads)[h.w2].noalias() += dout * act.transpose();
      (*grads)[h.b2] += dout.rowwise().sum();
    }
    Matrix<Scalar> dhidden = params[h.w2].transpose() * dout;
    dhidden = (cache.hidden.array() > Scalar(0)).select(dhidden, Scalar(0));
    if (grads) {
      (*grads)[h.w1].noalias() += dhidden * cache.input.transpose();
      (*grads)[h.b1] += dhidden.rowwise().sum();
    }
    return params[h.w1].transpose() * dhidden;
  }
};

/// Per-layer embeddings of an image: H^l_s for every location s (columns,
/// row-major location order) of every tap layer.
template <typename Scalar>
std::vector<Matrix<Scalar>> extract_features(const FeatureExtractor<Scalar>& H, const Generator<Scalar>& G,
                                             const Image<Scalar>& image, bool normalize) {
  const auto maps = G.encode(image, H.spec.tap_layers);
  std::vector<Matrix<Scalar>> out;
  for (int k = 0; k < H.layers(); ++k) out.push_back(H.embed(k, maps[k].data, normalize));
  return out;
}

}  // namespace capit
