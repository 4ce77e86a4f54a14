#pragma once

#include <algorithm>
#include <limits>
#include <utility>
#include <vector>

#include "capit/nn/layers.hpp"
#include "capit/nn/params.hpp"

namespace capit::nn {

enum class Op { conv, instance_norm, relu, leaky_relu, tanh, upsample2, avgpool2, residual };

/// One step of a sequential network. `residual` nodes carry a body and
/// compute x + body(x).
struct Node {
  Op op = Op::relu;
  int weight = -1;  // ParamStore indices (conv only)
  int bias = -1;
  ConvGeometry geometry;
  double slope = 0.2;  // leaky_relu
  std::vector<Node> body;
};

/// Activations recorded by a forward pass, consumed by backward.
template <typename Scalar>
struct Trace {
  std::vector<Image<Scalar>> inputs;  // inputs[k] feeds node k
  Image<Scalar> output;
  std::vector<RowMajorMatrix<Scalar>> cols;         // conv nodes
  std::vector<InstanceNormCache<Scalar>> norms;     // instance_norm nodes
  std::vector<Trace> bodies;                        // residual nodes
  int executed = 0;

  /// Output of node k (k < executed).
  const Image<Scalar>& output_of(int k) const { return k + 1 < executed ? inputs[k + 1] : output; }
};

/// Sequential network over a shared parameter store.
template <typename Scalar>
class Sequential {
 public:
  std::vector<Node> nodes;

  /// Runs nodes [0, stop) (all when stop < 0).
  Image<Scalar> forward(const ParamStore<Scalar>& params, const Image<Scalar>& x, Trace<Scalar>* trace,
                        int stop = -1) const {
    return run(nodes, params, x, trace, stop < 0 ? static_cast<int>(nodes.size()) : stop);
  }

  /// Back-propagates `dy` (gradient of the last executed node's output; may be
  /// empty) plus any `taps` (node index -> gradient of that node's output).
  /// Parameter gradients are accumulated into `grads` when non-null.
  Image<Scalar> backward(const ParamStore<Scalar>& params, const Trace<Scalar>& trace, Image<Scalar> dy,
                         ParamStore<Scalar>* grads,
                         const std::vector<std::pair<int, Image<Scalar>>>& taps = {},
                         bool need_input_grad = true) const {
    return back(nodes, params, trace, std::move(dy), grads, taps, need_input_grad);
  }

  /// Smallest |input| to any ReLU-family node in a recorded pass; used by
  /// gradient checks to reject inputs sitting on a kink.
  static Scalar relu_margin(const std::vector<Node>& nodes, const Trace<Scalar>& trace) {
    Scalar margin = std::numeric_limits<Scalar>::infinity();
    for (int k = 0; k < trace.executed; ++k) {
      const Node& n = nodes[k];
      if (n.op == Op::relu || n.op == Op::leaky_relu) {
        margin = std::min(margin, trace.inputs[k].data.cwiseAbs().minCoeff());
      } else if (n.op == Op::residual) {
        margin = std::min(margin, relu_margin(n.body, trace.bodies[k]));
      }
    }
    return margin;
  }
  Scalar relu_margin(const Trace<Scalar>& trace) const { return relu_margin(nodes, trace); }

 private:
  static Image<Scalar> run(const std::vector<Node>& nodes, const ParamStore<Scalar>& params, const Image<Scalar>& x,
                           Trace<Scalar>* trace, int stop) {
    if (trace) {
      trace->inputs.assign(stop, Image<Scalar>());
      trace->cols.assign(stop, RowMajorMatrix<Scalar>());
      trace->norms.assign(stop, InstanceNormCache<Scalar>());
      trace->bodies.assign(stop, Trace<Scalar>());
      trace->executed = stop;
    }
    Image<Scalar> cur = x;
    for (int k = 0; k < stop; ++k) {
      const Node& n = nodes[k];
      if (trace) trace->inputs[k] = cur;
      switch (n.op) {
        case Op::conv:
          cur = conv2d_forward(cur, params[n.weight], params[n.bias], n.geometry, trace ? &trace->cols[k] : nullptr);
          break;
        case Op::instance_norm:
          cur = instance_norm_forward(cur, trace ? &trace->norms[k] : nullptr);
          break;
        case Op::relu:
          cur.data = cur.data.cwiseMax(Scalar(0));
          break;
        case Op::leaky_relu: {
          const Scalar s = static_cast<Scalar>(n.slope);
          cur.data = cur.data.unaryExpr([s](Scalar v) { return v > 0 ? v : s * v; });
          break;
        }
        case Op::tanh:
          cur.data = cur.data.array().tanh().matrix();
          break;
        case Op::upsample2:
          cur = upsample2_forward(cur);
          break;
        case Op::avgpool2:
          cur = avgpool2_forward(cur);
          break;
        case Op::residual: {
          Image<Scalar> body = run(n.body, params, cur, trace ? &trace->bodies[k] : nullptr,
                                   static_cast<int>(n.body.size()));
          cur.data += body.data;
          break;
        }
      }
    }
    if (trace) trace->output = cur;
    return cur;
  }

  static Image<Scalar> back(const std::vector<Node>& nodes, const ParamStore<Scalar>& params,
                            const Trace<Scalar>& trace, Image<Scalar> grad, ParamStore<Scalar>* grads,
                            const std::vector<std::pair<int, Image<Scalar>>>& taps,
                            bool need_input_grad = true) {
    const int last = trace.executed - 1;
    if (grad.data.size() == 0) {
      const auto& out = trace.output;
      grad = Image<Scalar>(out.height, out.width, out.channels());
    }
    for (int k = last; k >= 0; --k) {
      for (const auto& [node, g] : taps)
        if (node == k) grad.data += g.data;
      const Node& n = nodes[k];
      const Image<Scalar>& in = trace.inputs[k];
      switch (n.op) {
        case Op::conv:
          grad = conv2d_backward(grad, trace.cols[k], params[n.weight], in.channels(), in.height, in.width,
                                 n.geometry, grads ? &(*grads)[n.weight] : nullptr,
                                 grads ? &(*grads)[n.bias] : nullptr, k > 0 || need_input_grad);
          break;
        case Op::instance_norm:
          grad = instance_norm_backward(grad, trace.norms[k]);
          break;
        case Op::relu:
          grad.data = (in.data.array() > Scalar(0)).select(grad.data, Scalar(0));
          break;
        case Op::leaky_relu:
          grad.data = (in.data.array() > Scalar(0)).select(grad.data, static_cast<Scalar>(n.slope) * grad.data);
          break;
        case Op::tanh: {
          const auto& y = trace.output_of(k).data.array();
          grad.data = (grad.data.array() * (1 - y.square())).matrix();
          break;
        }
        case Op::upsample2:
          grad = upsample2_backward(grad);
          break;
        case Op::avgpool2:
          grad = avgpool2_backward(grad);
          break;
        case Op::residual: {
          Image<Scalar> body = back(n.body, params, trace.bodies[k], grad, grads, {});
          grad.data += body.data;
          break;
        }
      }
    }
    return grad;
  }
};

}  // namespace capit::nn
