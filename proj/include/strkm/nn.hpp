#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "strkm/errors.hpp"
#include "strkm/linalg.hpp"
#include "strkm/rng.hpp"

namespace strkm {

enum class Activation { Linear, Sigmoid, PRelu };

inline constexpr double kDefaultPReluSlope = 0.2;

/// One fully connected layer: y = act(W x + b). `slope` is only read for PRelu.
struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::Linear;
  double slope = kDefaultPReluSlope;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }
};

/// Multi-layer perceptron parameters. Also used to hold gradients with the
/// same layout (the `slope` field then carries d/dslope).
struct Mlp {
  std::vector<DenseLayer> layers;

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  void validate() const {
    if (layers.empty()) throw ValidationError("Mlp: no layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& L = layers[k];
      if (L.bias.size() != L.out_dim()) {
        throw ValidationError("Mlp: layer " + std::to_string(k) + " bias length mismatch");
      }
      if (k > 0 && L.in_dim() != layers[k - 1].out_dim()) {
        throw ValidationError("Mlp: layer " + std::to_string(k) + " input width " +
                              std::to_string(L.in_dim()) + " does not chain from " +
                              std::to_string(layers[k - 1].out_dim()));
      }
      if (!L.weight.all_finite() || !std::isfinite(L.slope)) {
        throw ValidationError("Mlp: layer " + std::to_string(k) + " has non-finite parameters");
      }
      for (double b : L.bias)
        if (!std::isfinite(b))
          throw ValidationError("Mlp: layer " + std::to_string(k) + " has non-finite bias");
    }
  }

  /// Zero-valued copy with identical shapes.
  Mlp zeros_like() const {
    Mlp z;
    z.layers.reserve(layers.size());
    for (const auto& L : layers) {
      z.layers.push_back(
          {Matrix(L.out_dim(), L.in_dim()), Vector(L.out_dim(), 0.0), L.activation, 0.0});
    }
    return z;
  }

  /// Number of scalar parameters: weights, biases and one slope per PRelu layer.
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& L : layers) {
      n += L.weight.size() + L.bias.size();
      if (L.activation == Activation::PRelu) ++n;
    }
    return n;
  }

  /// Flattened parameters in layer order: weight (row-major), bias, slope.
  Vector flatten() const {
    Vector out;
    out.reserve(parameter_count());
    for (const auto& L : layers) {
      out.insert(out.end(), L.weight.values().begin(), L.weight.values().end());
      out.insert(out.end(), L.bias.begin(), L.bias.end());
      if (L.activation == Activation::PRelu) out.push_back(L.slope);
    }
    return out;
  }

  /// Inverse of flatten(); returns the number of values consumed.
  std::size_t unflatten(std::span<const double> flat) {
    if (flat.size() < parameter_count()) throw ValidationError("Mlp::unflatten: too few values");
    std::size_t pos = 0;
    for (auto& L : layers) {
      for (auto& w : L.weight.values()) w = flat[pos++];
      for (auto& b : L.bias) b = flat[pos++];
      if (L.activation == Activation::PRelu) L.slope = flat[pos++];
    }
    return pos;
  }
};

/// Layer widths {in, h1, ..., out}. Hidden layers use `hidden`, the last layer
/// uses `output`. Weights ~ U(+-sqrt(6 / (fan_in + fan_out))), biases 0,
/// PRelu slopes 0.2.
inline Mlp make_mlp(std::span<const std::size_t> widths, Activation hidden, Activation output,
                    Rng& rng) {
  if (widths.size() < 2) throw ValidationError("make_mlp: need at least input and output width");
  Mlp net;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const std::size_t in = widths[k];
    const std::size_t out = widths[k + 1];
    if (in == 0 || out == 0) throw ValidationError("make_mlp: zero width");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer L{Matrix(out, in), Vector(out, 0.0),
                 k + 2 == widths.size() ? output : hidden, kDefaultPReluSlope};
    for (auto& w : L.weight.values()) w = rng.uniform(-limit, limit);
    net.layers.push_back(std::move(L));
  }
  return net;
}

inline double activate(Activation a, double z, double slope) noexcept {
  switch (a) {
    case Activation::Sigmoid:
      return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    case Activation::PRelu:
      return z >= 0.0 ? z : slope * z;
    case Activation::Linear:
      break;
  }
  return z;
}

/// Per-layer inputs and pre-activations of one forward pass.
struct ForwardTape {
  std::vector<Matrix> inputs;  // inputs[k]: batch x in_dim of layer k
  std::vector<Matrix> pre;     // pre[k]:    batch x out_dim of layer k
  std::vector<Matrix> post;    // post[k]:   batch x out_dim of layer k

  std::size_t batch() const { return inputs.empty() ? 0 : inputs.front().rows(); }
};

struct ForwardResult {
  Matrix output;
  ForwardTape tape;
};

inline ForwardResult mlp_forward(const Mlp& net, const Matrix& X) {
  if (net.layers.empty()) throw ValidationError("mlp_forward: network has no layers");
  if (X.cols() != net.in_dim()) {
    throw ValidationError("mlp_forward: input has " + std::to_string(X.cols()) +
                          " columns, network expects " + std::to_string(net.in_dim()));
  }
  ForwardTape tape;
  Matrix h = X;
  for (const auto& L : net.layers) {
    Matrix z = gemm(h, L.weight, Trans::No, Trans::Yes);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      auto r = z.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += L.bias[j];
    }
    Matrix a = z;
    for (auto& v : a.values()) v = activate(L.activation, v, L.slope);
    tape.inputs.push_back(std::move(h));
    tape.pre.push_back(std::move(z));
    tape.post.push_back(a);
    h = std::move(a);
  }
  return {std::move(h), std::move(tape)};
}

/// Forward pass without keeping the tape.
inline Matrix mlp_apply(const Mlp& net, const Matrix& X) { return mlp_forward(net, X).output; }

inline Vector mlp_apply(const Mlp& net, std::span<const double> x) {
  Matrix row(1, x.size(), Vector(x.begin(), x.end()));
  return mlp_apply(net, row).values();
}

struct BackwardResult {
  Mlp grads;
  Matrix input_grad;
};

/// Gradients of sum(dY .* Y) with respect to every parameter and to the input.
inline BackwardResult mlp_backward(const Mlp& net, const ForwardTape& tape, const Matrix& dY) {
  const std::size_t depth = net.layers.size();
  if (tape.inputs.size() != depth || tape.pre.size() != depth || tape.post.size() != depth) {
    throw ValidationError("mlp_backward: tape depth does not match network");
  }
  const std::size_t batch = tape.batch();
  for (std::size_t k = 0; k < depth; ++k) {
    const auto& L = net.layers[k];
    if (tape.inputs[k].rows() != batch || tape.inputs[k].cols() != L.in_dim() ||
        tape.pre[k].rows() != batch || tape.pre[k].cols() != L.out_dim()) {
      throw ValidationError("mlp_backward: tape layer " + std::to_string(k) +
                            " does not match network shapes");
    }
  }
  if (dY.rows() != batch || dY.cols() != net.out_dim()) {
    throw ValidationError("mlp_backward: output gradient shape mismatch");
  }

  BackwardResult res{net.zeros_like(), Matrix()};
  Matrix delta = dY;
  for (std::size_t k = depth; k-- > 0;) {
    const auto& L = net.layers[k];
    auto& G = res.grads.layers[k];
    const Matrix& z = tape.pre[k];
    const Matrix& a = tape.post[k];
    double slope_grad = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < L.out_dim(); ++j) {
        double& d = delta(i, j);
        switch (L.activation) {
          case Activation::Sigmoid:
            d *= a(i, j) * (1.0 - a(i, j));
            break;
          case Activation::PRelu:
            if (z(i, j) < 0.0) {
              slope_grad += d * z(i, j);
              d *= L.slope;
            }
            break;
          case Activation::Linear:
            break;
        }
      }
    }
    G.slope = L.activation == Activation::PRelu ? slope_grad : 0.0;
    G.weight = gemm(delta, tape.inputs[k], Trans::Yes, Trans::No);
    for (std::size_t i = 0; i < batch; ++i) axpy(1.0, delta.row(i), G.bias);
    delta = gemm(delta, L.weight);
  }
  res.input_grad = std::move(delta);
  return res;
}

struct AdamState {
  Vector m;
  Vector v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// Adam with bias correction:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2,
///   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps).
inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
                      double lr) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ValidationError("adam_step: shape mismatch between state, params and grads");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw DivergenceError("adam_step: non-finite gradient at index " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    params[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + state.eps);
  }
}

inline void adam_step(AdamState& state, Mlp& params, const Mlp& grads, double lr) {
  Vector p = params.flatten();
  const Vector g = grads.flatten();
  adam_step(state, p, g, lr);
  params.unflatten(p);
}

/// Central differences (f(p + h e_i) - f(p - h e_i)) / (2h) for every coordinate.
template <typename F>
Vector finite_diff_grad(F&& f, Vector params, double h = 1e-5) {
  Vector grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double fp = f(std::as_const(params));
    params[i] = saved - h;
    const double fm = f(std::as_const(params));
    params[i] = saved;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace strkm
