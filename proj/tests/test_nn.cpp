#include <gtest/gtest.h>

#include <cmath>

#include "strkm/nn.hpp"
#include "test_support.hpp"

using namespace strkm;

namespace {

Mlp single_layer(Matrix W, Vector b, Activation a, double slope = kDefaultPReluSlope) {
  Mlp net;
  net.layers.push_back({std::move(W), std::move(b), a, slope});
  return net;
}

// sum(dY .* net(X)) as a function of the flattened parameters.
double weighted_output(Mlp net, const Vector& params, const Matrix& X, const Matrix& dY) {
  net.unflatten(params);
  const Matrix Y = mlp_apply(net, X);
  double s = 0.0;
  for (std::size_t i = 0; i < Y.size(); ++i) s += Y.values()[i] * dY.values()[i];
  return s;
}

}  // namespace

TEST(MlpForward, IdentityLayerPassesInputThrough) {
  Rng rng(1);
  const Matrix X = Matrix::gaussian(4, 3, rng);
  EXPECT_EQ(mlp_apply(single_layer(Matrix::identity(3), Vector(3, 0.0), Activation::Linear), X), X);
}

TEST(MlpForward, ActivationValues) {
  const Matrix X{{-1.0, 0.0, 2.0}};
  const Matrix P = mlp_apply(single_layer(Matrix::identity(3), Vector(3, 0.0), Activation::PRelu), X);
  EXPECT_DOUBLE_EQ(P(0, 0), -0.2);
  EXPECT_DOUBLE_EQ(P(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(P(0, 2), 2.0);
  const Matrix S = mlp_apply(single_layer(Matrix::identity(3), Vector(3, 0.0), Activation::Sigmoid), X);
  EXPECT_DOUBLE_EQ(S(0, 1), 0.5);
  EXPECT_GT(S(0, 0), 0.0);
  EXPECT_LT(S(0, 2), 1.0);
}

TEST(MlpForward, SigmoidStaysInOpenInterval) {
  const Matrix X{{-30.0, 30.0, -700.0}};
  const Matrix S = mlp_apply(single_layer(Matrix::identity(3), Vector(3, 0.0), Activation::Sigmoid), X);
  for (double v : S.values()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_GT(S(0, 0), 0.0);
  EXPECT_LT(S(0, 1), 1.0);
}

TEST(MlpForward, ShapeMismatchIsRejected) {
  const Mlp net = single_layer(Matrix::identity(3), Vector(3, 0.0), Activation::Linear);
  EXPECT_THROW(mlp_forward(net, Matrix(2, 4)), ValidationError);
  EXPECT_THROW(mlp_forward(Mlp{}, Matrix(2, 4)), ValidationError);
}

TEST(MlpForward, Deterministic) {
  Rng rng(5);
  const Mlp net = fixture::random_mlp({3, 8, 8, 2}, Activation::PRelu, Activation::Sigmoid, rng);
  const Matrix X = Matrix::gaussian(10, 3, rng);
  EXPECT_EQ(mlp_apply(net, X).values(), mlp_apply(net, X).values());
}

TEST(MlpBackward, OneLayerClosedForm) {
  const Mlp net = single_layer(Matrix{{0.5, -1.0}}, Vector{0.0}, Activation::Linear);
  const Matrix X{{1.0, 2.0}};
  const auto fwd = mlp_forward(net, X);
  const auto back = mlp_backward(net, fwd.tape, Matrix{{1.0}});
  EXPECT_DOUBLE_EQ(back.grads.layers[0].weight(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(back.grads.layers[0].weight(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(back.grads.layers[0].bias[0], 1.0);
  EXPECT_DOUBLE_EQ(back.input_grad(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(back.input_grad(0, 1), -1.0);
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(2);
  const Mlp net = fixture::random_mlp({3, 5, 2}, Activation::PRelu, Activation::Sigmoid, rng);
  const Matrix X = Matrix::gaussian(4, 3, rng);
  const auto fwd = mlp_forward(net, X);
  const auto back = mlp_backward(net, fwd.tape, Matrix(4, 2));
  for (double g : back.grads.flatten()) EXPECT_EQ(g, 0.0);
  for (double g : back.input_grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(MlpBackward, PReluSlopeGradientOnNegativeInput) {
  const Mlp net = single_layer(Matrix{{1.0}}, Vector{0.0}, Activation::PRelu);
  const auto fwd = mlp_forward(net, Matrix{{-1.0}});
  const auto back = mlp_backward(net, fwd.tape, Matrix{{1.0}});
  EXPECT_EQ(back.grads.layers[0].slope, -1.0);
}

TEST(MlpBackward, StaleTapeIsRejected) {
  Rng rng(3);
  const Mlp a = fixture::random_mlp({3, 4, 2}, Activation::PRelu, Activation::Linear, rng);
  const Mlp b = fixture::random_mlp({3, 5, 2}, Activation::PRelu, Activation::Linear, rng);
  const Mlp c = fixture::random_mlp({3, 4, 4, 2}, Activation::PRelu, Activation::Linear, rng);
  const auto fwd = mlp_forward(a, Matrix::gaussian(2, 3, rng));
  EXPECT_THROW(mlp_backward(b, fwd.tape, Matrix(2, 2)), ValidationError);
  EXPECT_THROW(mlp_backward(c, fwd.tape, Matrix(2, 2)), ValidationError);
  EXPECT_THROW(mlp_backward(a, fwd.tape, Matrix(3, 2)), ValidationError);
}

TEST(MlpBackward, MatchesCentralDifferencesOn20Seeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<std::size_t> widths{1 + rng.below(6)};
    const std::size_t depth = 1 + rng.below(3);
    for (std::size_t k = 0; k < depth; ++k) widths.push_back(1 + rng.below(16));
    const Activation out = seed % 3 == 0 ? Activation::Sigmoid
                                         : (seed % 3 == 1 ? Activation::Linear : Activation::PRelu);
    const Mlp net = fixture::random_mlp(widths, Activation::PRelu, out, rng);
    const Matrix X = Matrix::gaussian(3, widths.front(), rng);
    const Matrix dY = Matrix::gaussian(3, widths.back(), rng);

    const auto fwd = mlp_forward(net, X);
    const auto back = mlp_backward(net, fwd.tape, dY);
    const Vector numeric = oracle::central_diff(
        [&](const Vector& p) { return weighted_output(net, p, X, dY); }, net.flatten());
    EXPECT_LE(oracle::rel_error(back.grads.flatten(), numeric), 1e-5) << "seed " << seed;

    // input gradient
    const Vector x_numeric = oracle::central_diff(
        [&](const Vector& x) {
          const Matrix Y = mlp_apply(net, Matrix(3, widths.front(), x));
          double s = 0.0;
          for (std::size_t i = 0; i < Y.size(); ++i) s += Y.values()[i] * dY.values()[i];
          return s;
        },
        X.values());
    EXPECT_LE(oracle::rel_error(back.input_grad.values(), x_numeric), 1e-5) << "seed " << seed;
  }
}

TEST(MlpParams, FlattenRoundTrip) {
  Rng rng(9);
  Mlp net = fixture::random_mlp({2, 4, 3}, Activation::PRelu, Activation::Sigmoid, rng);
  const Vector flat = net.flatten();
  EXPECT_EQ(flat.size(), net.parameter_count());
  EXPECT_EQ(flat.size(), 2u * 4 + 4 + 1 + 4 * 3 + 3);
  Mlp other = net.zeros_like();
  EXPECT_EQ(other.unflatten(flat), flat.size());
  EXPECT_EQ(other.flatten(), flat);
  EXPECT_THROW(other.unflatten(Vector(3)), ValidationError);
}

TEST(MakeMlp, GlorotRangeZeroBiasDefaultSlope) {
  Rng rng(11);
  const std::vector<std::size_t> widths{10, 6};
  const Mlp net = make_mlp(widths, Activation::PRelu, Activation::PRelu, rng);
  const double limit = std::sqrt(6.0 / 16.0);
  for (double w : net.layers[0].weight.values()) EXPECT_LE(std::abs(w), limit);
  for (double b : net.layers[0].bias) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(net.layers[0].slope, 0.2);
}

TEST(Adam, ZeroGradientsLeaveParamsAndDecayMoments) {
  AdamState st(2);
  st.m = {1.0, -1.0};
  st.v = {0.5, 0.5};
  Vector p{3.0, 4.0};
  adam_step(st, p, Vector{0.0, 0.0}, 0.1);
  EXPECT_DOUBLE_EQ(st.m[0], 0.9);
  EXPECT_DOUBLE_EQ(st.v[0], 0.5 * 0.999);
  EXPECT_EQ(st.step, 1u);
  AdamState fresh(2);
  Vector q{3.0, 4.0};
  adam_step(fresh, q, Vector{0.0, 0.0}, 0.1);
  EXPECT_EQ(q, (Vector{3.0, 4.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamState st(2);
  Vector p{1.0, 1.0};
  adam_step(st, p, Vector{0.3, -7.0}, 0.01);
  EXPECT_NEAR(p[0], 0.99, 1e-9);
  EXPECT_NEAR(p[1], 1.01, 1e-9);
}

TEST(Adam, MinimizesSquare) {
  AdamState st(1);
  Vector w{1.0};
  for (int i = 0; i < 100; ++i) adam_step(st, w, Vector{2.0 * w[0]}, 0.05);
  EXPECT_LT(std::abs(w[0]), 0.1);
}

TEST(Adam, NonFiniteGradientDiverges) {
  AdamState st(1);
  Vector w{1.0};
  EXPECT_THROW(adam_step(st, w, Vector{NAN}, 0.1), DivergenceError);
  EXPECT_THROW(adam_step(st, w, Vector{1.0, 2.0}, 0.1), ValidationError);
}

TEST(FiniteDiff, SquareAndConstant) {
  const Vector g = finite_diff_grad([](const Vector& p) { return p[0] * p[0]; }, Vector{3.0});
  EXPECT_NEAR(g[0], 6.0, 1e-8);
  const Vector z = finite_diff_grad([](const Vector&) { return 4.0; }, Vector{1.0, 2.0});
  EXPECT_EQ(z, (Vector{0.0, 0.0}));
}

TEST(FiniteDiff, AgreesWithBackward) {
  Rng rng(21);
  const Mlp net = fixture::random_mlp({3, 6, 2}, Activation::PRelu, Activation::Sigmoid, rng);
  const Matrix X = Matrix::gaussian(4, 3, rng);
  const Matrix dY = Matrix::gaussian(4, 2, rng);
  const auto back = mlp_backward(net, mlp_forward(net, X).tape, dY);
  const Vector fd = finite_diff_grad([&](const Vector& p) { return weighted_output(net, p, X, dY); },
                                     net.flatten());
  EXPECT_LE(oracle::rel_error(back.grads.flatten(), fd), 1e-5);
}
