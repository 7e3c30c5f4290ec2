#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "strkm/data.hpp"
#include "strkm/errors.hpp"
#include "strkm/linalg.hpp"
#include "strkm/nn.hpp"
#include "strkm/rng.hpp"
#include "strkm/stiefel.hpp"

namespace strkm {

struct ModelDims {
  std::size_t input = 0;    // D
  std::size_t feature = 0;  // l
  std::size_t latent = 0;   // m
};

/// Trained St-RKM: encoder phi, decoder psi, interconnection matrix U on
/// St(l, m), and the feature mean frozen after training.
struct StRkmModel {
  Mlp encoder;
  Mlp decoder;
  StiefelPoint U;
  Vector feature_mean;  // empty until training finishes
  double lambda = 100.0;

  ModelDims dims() const { return {encoder.in_dim(), U.ambient_dim(), U.subspace_dim()}; }

  bool trained() const noexcept { return feature_mean.size() == U.ambient_dim() && !U.matrix().empty(); }

  void validate() const {
    encoder.validate();
    decoder.validate();
    const auto d = dims();
    if (encoder.out_dim() != d.feature) {
      throw ValidationError("StRkmModel: encoder output " + std::to_string(encoder.out_dim()) +
                            " does not match U rows " + std::to_string(d.feature));
    }
    if (decoder.in_dim() != d.feature || decoder.out_dim() != d.input) {
      throw ValidationError("StRkmModel: decoder shape does not mirror the encoder");
    }
    if (d.latent == 0 || d.latent > d.feature) throw ValidationError("StRkmModel: need 1 <= m <= l");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw ValidationError("StRkmModel: lambda must be finite and non-negative");
    }
    for (double v : feature_mean)
      if (!std::isfinite(v)) throw ValidationError("StRkmModel: non-finite feature mean");
  }

  void require_trained(std::size_t input_len) const {
    if (!trained()) throw ValidationError("StRkmModel: model has no frozen feature mean (untrained)");
    if (input_len != encoder.in_dim()) {
      throw ValidationError("StRkmModel: input has length " + std::to_string(input_len) +
                            ", model expects " + std::to_string(encoder.in_dim()));
    }
  }
};

/// Batch-averaged objective terms.
struct ObjectiveValue {
  double total = 0.0;  // kpca + lambda * ae
  double kpca = 0.0;
  double ae = 0.0;
};

struct ObjectiveGradients {
  ObjectiveValue value;
  Mlp encoder;
  Mlp decoder;
  Matrix U;  // Euclidean gradient, valid for any U (not only orthonormal ones)
};

namespace detail {

inline Vector column_mean(const Matrix& A) {
  Vector mu(A.cols(), 0.0);
  for (std::size_t i = 0; i < A.rows(); ++i) axpy(1.0, A.row(i), mu);
  for (auto& v : mu) v /= static_cast<double>(A.rows());
  return mu;
}

inline void subtract_row(Matrix& A, std::span<const double> v) {
  for (std::size_t i = 0; i < A.rows(); ++i) axpy(-1.0, v, A.row(i));
}

inline double row_sq_norm(const Matrix& A, std::size_t i) { return dot(A.row(i), A.row(i)); }

struct ObjectiveForward {
  ForwardResult enc;
  ForwardResult dec;
  Matrix centered;  // Phi
  Matrix latent;    // H = Phi U
  Matrix residual;  // R = Phi - Phi U U^T
  Matrix error;     // X - Xhat
  ObjectiveValue value;
};

inline ObjectiveForward objective_forward(const Mlp& encoder, const Mlp& decoder, const Matrix& U,
                                          const Matrix& X, double lambda,
                                          std::span<const double> center) {
  if (X.rows() == 0) throw ValidationError("objective: empty batch");
  ObjectiveForward f;
  f.enc = mlp_forward(encoder, X);
  if (f.enc.output.cols() != U.rows()) throw ValidationError("objective: U rows differ from feature width");
  f.centered = f.enc.output;
  if (center.empty()) {
    subtract_row(f.centered, column_mean(f.centered));
  } else {
    if (center.size() != U.rows()) throw ValidationError("objective: center length mismatch");
    subtract_row(f.centered, center);
  }
  f.latent = f.centered * U;
  Matrix projected = gemm(f.latent, U, Trans::No, Trans::Yes);
  f.residual = f.centered - projected;
  f.dec = mlp_forward(decoder, projected);
  if (!f.dec.output.same_shape(X)) throw ValidationError("objective: decoder output shape mismatch");
  f.error = X - f.dec.output;

  const double b = static_cast<double>(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    f.value.kpca += row_sq_norm(f.residual, i);
    f.value.ae += row_sq_norm(f.error, i);
  }
  f.value.kpca /= b;
  f.value.ae /= b;
  f.value.total = f.value.kpca + lambda * f.value.ae;
  return f;
}

}  // namespace detail

/// Mean over the batch of ||(I - U U^T) phi_c(x)||^2 + lambda ||x - psi(U U^T phi_c(x))||^2,
/// where phi_c is the encoder output minus `center` (empty: minus the batch mean).
inline ObjectiveValue objective_value(const Mlp& encoder, const Mlp& decoder, const Matrix& U,
                                      const Matrix& X, double lambda,
                                      std::span<const double> center = {}) {
  return detail::objective_forward(encoder, decoder, U, X, lambda, center).value;
}

/// objective_value together with its exact gradients.
inline ObjectiveGradients objective_gradients(const Mlp& encoder, const Mlp& decoder,
                                              const Matrix& U, const Matrix& X, double lambda,
                                              std::span<const double> center = {}) {
  auto f = detail::objective_forward(encoder, decoder, U, X, lambda, center);
  const double b = static_cast<double>(X.rows());

  Matrix d_out = f.error * (-2.0 * lambda / b);
  auto dec = mlp_backward(decoder, f.dec.tape, d_out);
  const Matrix& dZ = dec.input_grad;  // gradient w.r.t. Phi U U^T

  // d/dPhi: kpca part 2/b (I - U U^T) R, projection part dZ U U^T.
  const Matrix RU = f.residual * U;
  Matrix d_phi = (f.residual - gemm(RU, U, Trans::No, Trans::Yes)) * (2.0 / b);
  const Matrix dZU = dZ * U;
  d_phi += gemm(dZU, U, Trans::No, Trans::Yes);

  Matrix d_feat = d_phi;
  if (center.empty()) detail::subtract_row(d_feat, detail::column_mean(d_phi));
  auto enc = mlp_backward(encoder, f.enc.tape, d_feat);

  // d/dU: kpca part -2/b (R^T H + Phi^T R U), projection part dZ^T H + Phi^T dZ U.
  Matrix gU = (gemm(f.residual, f.latent, Trans::Yes) + gemm(f.centered, RU, Trans::Yes)) *
              (-2.0 / b);
  gU += gemm(dZ, f.latent, Trans::Yes);
  gU += gemm(f.centered, dZU, Trans::Yes);

  return {f.value, std::move(enc.grads), std::move(dec.grads), std::move(gU)};
}

/// phi(x) - feature_mean
inline Vector encode_centered(const StRkmModel& model, std::span<const double> x) {
  model.require_trained(x.size());
  return mlp_apply(model.encoder, x) - model.feature_mean;
}

/// h = U^T (phi(x) - feature_mean)
inline Vector latent(const StRkmModel& model, std::span<const double> x) {
  return matvec_t(model.U.matrix(), encode_centered(model, x));
}

/// psi(U U^T (phi(x) - feature_mean))
inline Vector reconstruct(const StRkmModel& model, std::span<const double> x) {
  const Vector h = latent(model, x);
  return mlp_apply(model.decoder, matvec(model.U.matrix(), h));
}

struct ObjectiveTerms {
  double kpca = 0.0;
  double ae = 0.0;
};

/// Per-sample KPCA reconstruction error and autoencoder loss.
inline ObjectiveTerms objective_terms(const StRkmModel& model, std::span<const double> x) {
  const Vector phi = encode_centered(model, x);
  const Vector h = matvec_t(model.U.matrix(), phi);
  const Vector proj = matvec(model.U.matrix(), h);
  const Vector r = phi - proj;
  const Vector xr = mlp_apply(model.decoder, proj);
  const Vector e = Vector(x.begin(), x.end()) - xr;
  return {dot(r, r), dot(e, e)};
}

/// (1/n) sum phi_c phi_c^T with features centered by the dataset's own mean.
inline Matrix feature_covariance(const StRkmModel& model, const Matrix& X) {
  if (X.rows() == 0) throw ValidationError("feature_covariance: empty dataset");
  if (X.cols() != model.encoder.in_dim()) throw ValidationError("feature_covariance: dim mismatch");
  Matrix F = mlp_apply(model.encoder, X);
  detail::subtract_row(F, detail::column_mean(F));
  Matrix C = gemm(F, F, Trans::Yes) * (1.0 / static_cast<double>(X.rows()));
  for (std::size_t i = 0; i < C.rows(); ++i)
    for (std::size_t j = i + 1; j < C.cols(); ++j) C(j, i) = C(i, j);
  return C;
}

struct TrainConfig {
  std::size_t epochs = 1600;
  std::size_t batch_size = 256;
  double lr_adam = 2e-4;
  double lr_cayley = 1e-4;
  double lambda = 100.0;
  std::size_t subspace_dim = 10;             // m
  std::size_t feature_dim = 50;              // l
  std::vector<std::size_t> hidden{64, 32};   // encoder hidden widths; decoder mirrors them
  std::uint64_t seed = 0;
  bool deterministic = false;  // full-batch gradient descent with QR retraction
  bool freeze_prelu = false;

  void validate(std::size_t n) const {
    if (epochs == 0) throw ValidationError("TrainConfig: epochs must be positive");
    if (batch_size == 0) throw ValidationError("TrainConfig: batch_size must be positive");
    if (!deterministic && batch_size > n) {
      throw ValidationError("TrainConfig: batch_size " + std::to_string(batch_size) +
                            " exceeds dataset size " + std::to_string(n));
    }
    if (!(lr_adam > 0.0) || !(lr_cayley > 0.0)) {
      throw ValidationError("TrainConfig: learning rates must be positive");
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw ValidationError("TrainConfig: lambda must be finite and non-negative");
    }
    if (subspace_dim == 0 || subspace_dim > feature_dim) {
      throw ValidationError("TrainConfig: need 1 <= subspace_dim <= feature_dim");
    }
    for (auto w : hidden)
      if (w == 0) throw ValidationError("TrainConfig: zero hidden width");
  }
};

struct TrainHistory {
  std::vector<double> objective;
  std::vector<double> kpca;
  std::vector<double> ae;
  std::vector<double> defect;
  std::size_t reorthonormalizations = 0;
};

struct TrainResult {
  StRkmModel model;
  TrainHistory history;
};

/// Untrained model with the architecture of `config` for inputs of dimension d.
inline StRkmModel init_model(const TrainConfig& config, std::size_t d) {
  Rng rng(derive_seed(config.seed, 0));
  std::vector<std::size_t> enc_widths{d};
  enc_widths.insert(enc_widths.end(), config.hidden.begin(), config.hidden.end());
  enc_widths.push_back(config.feature_dim);
  std::vector<std::size_t> dec_widths(enc_widths.rbegin(), enc_widths.rend());
  StRkmModel model;
  model.encoder = make_mlp(enc_widths, Activation::PRelu, Activation::Linear, rng);
  model.decoder = make_mlp(dec_widths, Activation::PRelu, Activation::Sigmoid, rng);
  model.U = random_stiefel(config.feature_dim, config.subspace_dim, rng);
  model.lambda = config.lambda;
  return model;
}

/// Alternating minimization: per minibatch one Adam step on the encoder and
/// decoder, then one Cayley Adam step on U, both from the same backward pass.
/// Features are centered by the minibatch mean; after the last epoch the
/// full-training-set feature mean is computed and frozen into the model.
///
/// Seeds: stream 0 initializes parameters, stream 1 shuffles minibatches.
inline TrainResult train(const TrainConfig& config, const Dataset& data) {
  data.validate();
  config.validate(data.size());
  const std::size_t n = data.size();

  StRkmModel model = init_model(config, data.dim());
  Rng shuffle_rng(derive_seed(config.seed, 1));
  AdamState adam(model.encoder.parameter_count() + model.decoder.parameter_count());
  CayleyAdamState cayley(config.feature_dim, config.subspace_dim);
  TrainHistory history;

  const std::size_t batch = config.deterministic ? n : config.batch_size;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order;
    if (config.deterministic) {
      order.resize(n);
      std::iota(order.begin(), order.end(), 0);
    } else {
      order = shuffled_indices(n, shuffle_rng);
    }
    ObjectiveValue sums;
    for (std::size_t start = 0, b = 0; start < n; start += batch, ++b) {
      const std::size_t count = std::min(batch, n - start);
      const Matrix Xb = subset(data, std::span(order).subspan(start, count), "").X;
      const std::string where =
          "epoch " + std::to_string(epoch) + ", batch " + std::to_string(b);

      auto g = objective_gradients(model.encoder, model.decoder, model.U.matrix(), Xb,
                                   model.lambda);
      if (!std::isfinite(g.value.total)) throw DivergenceError("train: non-finite loss at " + where);
      if (config.freeze_prelu) {
        for (auto& L : g.encoder.layers) L.slope = 0.0;
        for (auto& L : g.decoder.layers) L.slope = 0.0;
      }
      sums.total += g.value.total * static_cast<double>(count);
      sums.kpca += g.value.kpca * static_cast<double>(count);
      sums.ae += g.value.ae * static_cast<double>(count);

      Vector params = model.encoder.flatten();
      Vector grads = g.encoder.flatten();
      {
        const Vector pd = model.decoder.flatten();
        const Vector gd = g.decoder.flatten();
        params.insert(params.end(), pd.begin(), pd.end());
        grads.insert(grads.end(), gd.begin(), gd.end());
      }
      try {
        if (config.deterministic) {
          for (double gi : grads)
            if (!std::isfinite(gi)) throw DivergenceError("non-finite gradient");
          axpy(-config.lr_adam, grads, params);
          model.U = projected_gradient_step(model.U, g.U, config.lr_cayley);
        } else {
          adam_step(adam, params, grads, config.lr_adam);
          model.U = cayley_adam_step(cayley, model.U, g.U, config.lr_cayley);
        }
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string("train: ") + e.what() + " at " + where);
      }
      const std::size_t used = model.encoder.unflatten(params);
      model.decoder.unflatten(std::span(params).subspan(used));
    }
    const double nn = static_cast<double>(n);
    history.objective.push_back(sums.total / nn);
    history.kpca.push_back(sums.kpca / nn);
    history.ae.push_back(sums.ae / nn);
    history.defect.push_back(orthonormality_defect(model.U.matrix()));
  }
  history.reorthonormalizations = cayley.reorthonormalizations;

  model.feature_mean = detail::column_mean(mlp_apply(model.encoder, data.X));
  return {std::move(model), std::move(history)};
}

}  // namespace strkm
