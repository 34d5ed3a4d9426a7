#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "fdia/core/rng.hpp"
#include "fdia/nn/checkpoint.hpp"
#include "fdia/nn/core.hpp"
#include "fdia/nn/gradcheck.hpp"
#include "fdia/nn/optimizer.hpp"

using namespace fdia;
using namespace fdia::nn;

namespace {

Tensor random_tensor(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = d(rng);
  return t;
}

}  // namespace

TEST(Dense, IdentityWeightsPassInputThrough) {
  DenseParams p{Tensor::Identity(3, 3), Tensor::Zero(1, 3)};
  Tensor x(2, 3);
  x << 1, -2, 3, 0.5, 0, -1;
  EXPECT_EQ(dense_forward(p, x), x);
}

TEST(Dense, HandComputedTwoByTwo) {
  Tensor w(2, 2);
  w << 1, 2, 3, 4;
  Tensor b(1, 2);
  b << 0.5, -1;
  Tensor x(1, 2);
  x << 1, -1;
  // [1, -1] W = [1 - 3, 2 - 4] = [-2, -2]; plus bias
  const Tensor y = dense_forward({w, b}, x);
  EXPECT_DOUBLE_EQ(y(0, 0), -1.5);
  EXPECT_DOUBLE_EQ(y(0, 1), -3.0);
}

TEST(Dense, ZeroWeightsGiveTheBias) {
  Tensor b(1, 2);
  b << 0.25, -4;
  const Tensor y = dense_forward({Tensor::Zero(5, 2), b}, Tensor::Random(3, 5));
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_EQ(y.row(i), b.row(0));
}

TEST(Dense, ShapeMismatchIsAnError) {
  EXPECT_THROW(dense_forward(make_dense(3, 2), Tensor::Zero(1, 4)), ConfigError);
}

TEST(Activation, ReluAndSigmoidValues) {
  EXPECT_EQ(relu(-1.0), 0.0);
  EXPECT_EQ(relu(2.0), 2.0);
  EXPECT_EQ(sigmoid(0.0), 0.5);
  const double lo = sigmoid(-500.0);
  EXPECT_FALSE(std::isnan(lo));
  EXPECT_GE(lo, 0.0);
  EXPECT_LT(lo, 1e-200);
  EXPECT_EQ(sigmoid(500.0), 1.0);
  EXPECT_NEAR(sigmoid(2.0) + sigmoid(-2.0), 1.0, 1e-15);
  EXPECT_NEAR(elu(-1.0), std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_THROW(parse_activation("swish"), ConfigError);
}

TEST(Activation, DerivativesMatchCentralDifferences) {
  for (auto a : {Activation::elu, Activation::tanh, Activation::sigmoid, Activation::linear, Activation::relu})
    for (double x : {-2.3, -0.4, 0.3, 1.7}) {
      const double h = 1e-6;
      const double fd = (activate(a, x + h) - activate(a, x - h)) / (2 * h);
      EXPECT_NEAR(activate_derivative(a, x), fd, 1e-8) << to_string(a) << " at " << x;
    }
}

TEST(CrossEntropy, ReferenceValues) {
  Eigen::VectorXd y1(1), p1(1);
  y1 << 1;
  p1 << 1;
  EXPECT_NEAR(binary_cross_entropy(y1, p1), -std::log(1 - kProbabilityClip), 1e-15);
  p1 << 0.5;
  EXPECT_NEAR(binary_cross_entropy(y1, p1), std::log(2.0), 1e-15);
  Eigen::VectorXd y(2), p(2);
  y << 1, 0;
  p << 0.9, 0.1;
  EXPECT_NEAR(binary_cross_entropy(y, p), -std::log(0.9), 1e-15);
  EXPECT_NEAR(binary_cross_entropy(y, p), 0.10536, 1e-5);
}

TEST(CrossEntropy, NonNegativeAndZeroOnlyAtClippedPerfection) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd y(4), p(4);
    for (int i = 0; i < 4; ++i) {
      y[i] = u(rng) < 0.5 ? 0 : 1;
      p[i] = u(rng);
    }
    EXPECT_GT(binary_cross_entropy(y, p), 0.0);
  }
  Eigen::VectorXd y(2), p(2);
  y << 1, 0;
  p << 1, 0;
  EXPECT_NEAR(binary_cross_entropy(y, p), 1e-7, 1e-9);
}

TEST(CrossEntropy, GradientVanishesWhereClipped) {
  Eigen::VectorXd y(3), z(3), dz;
  y << 0, 1, 0;
  z << -40, 40, 0.3;
  sigmoid_bce_with_gradient(y, z, dz);
  EXPECT_EQ(dz[0], 0.0);
  EXPECT_EQ(dz[1], 0.0);
  EXPECT_NEAR(dz[2], sigmoid(0.3) / 3, 1e-15);
}

TEST(Optimizer, SgdStep) {
  Tensor p = Tensor::Zero(1, 1);
  Optimizer opt({OptimizerKind::sgd, 0.1});
  opt.step({&p}, {Tensor::Ones(1, 1)});
  EXPECT_DOUBLE_EQ(p(0, 0), -0.1);
}

TEST(Optimizer, AdamFirstStepHasMagnitudeLr) {
  for (double g : {1e-4, 0.3, -7.0, 250.0}) {
    Tensor p = Tensor::Zero(1, 1);
    Optimizer opt({OptimizerKind::adam, 1e-3});
    Tensor grad(1, 1);
    grad << g;
    opt.step({&p}, {grad});
    // bias-corrected first step: lr * g / (|g| + eps)
    EXPECT_NEAR(p(0, 0), -1e-3 * g / (std::abs(g) + 1e-8), 1e-15);
    EXPECT_NEAR(std::abs(p(0, 0)), 1e-3, 1e-6);
  }
}

TEST(Optimizer, ZeroGradientsLeaveParametersUnchanged) {
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::rmsprop}) {
    Tensor p = Tensor::Constant(2, 3, 0.7);
    Optimizer opt({kind, 1e-2});
    for (int i = 0; i < 5; ++i) opt.step({&p}, {Tensor::Zero(2, 3)});
    EXPECT_EQ(p, Tensor::Constant(2, 3, 0.7)) << to_string(kind);
  }
}

TEST(Optimizer, RmspropMatchesClosedForm) {
  Tensor p = Tensor::Zero(1, 1);
  OptimizerConfig cfg{OptimizerKind::rmsprop, 0.01};
  Optimizer opt(cfg);
  Tensor g(1, 1);
  g << 2;
  opt.step({&p}, {g});
  const double v = 0.1 * 4;
  EXPECT_NEAR(p(0, 0), -0.01 * 2 / (std::sqrt(v) + 1e-8), 1e-15);
}

TEST(Optimizer, DeterministicAndShapeChecked) {
  Rng rng(3);
  const Tensor g = random_tensor(3, 2, rng);
  Tensor a = Tensor::Ones(3, 2), b = Tensor::Ones(3, 2);
  Optimizer oa({OptimizerKind::adam}), ob({OptimizerKind::adam});
  for (int i = 0; i < 4; ++i) {
    oa.step({&a}, {g});
    ob.step({&b}, {g});
  }
  EXPECT_EQ(a, b);
  EXPECT_THROW(oa.step({&a}, {Tensor::Zero(2, 3)}), ConfigError);
  EXPECT_THROW(parse_optimizer("lbfgs"), ConfigError);
}

TEST(GradientCheck, QuadraticIsExact) {
  Tensor p(1, 3);
  p << 0.5, -2, 3;
  const auto loss = [&] { return 0.5 * p.squaredNorm(); };
  const auto r = finite_difference_check(loss, {&p}, {p}, 1e-4, 1e-8);
  EXPECT_TRUE(r.passed) << r.max_relative_error;
  EXPECT_EQ(r.checked, 3u);
}

TEST(GradientCheck, FlagsAWrongGradient) {
  Tensor p = Tensor::Constant(1, 2, 1.0);
  const auto loss = [&] { return p.squaredNorm(); };
  const auto r = finite_difference_check(loss, {&p}, {p}, 1e-6, 1e-5);
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.max_relative_error, 0.5, 1e-6);
}

TEST(GradientCheck, DenseSigmoidCrossEntropyOnRandomBatches) {
  Rng rng(11);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    DenseParams p{random_tensor(3, 1, rng), random_tensor(1, 1, rng)};
    const Tensor x = random_tensor(4, 3, rng);
    Eigen::VectorXd y(4);
    for (int i = 0; i < 4; ++i) y[i] = (trial + i) % 2;
    const auto loss = [&] {
      Eigen::VectorXd dz;
      return sigmoid_bce_with_gradient(y, dense_forward(p, x).col(0), dz);
    };
    Eigen::VectorXd dz;
    sigmoid_bce_with_gradient(y, dense_forward(p, x).col(0), dz);
    const auto g = dense_backward(p, x, dz);
    const auto r = finite_difference_check(loss, {&p.weights, &p.bias}, {g.weights, g.bias}, 1e-6, 1e-5);
    worst = std::max(worst, r.max_relative_error);
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(GradientCheck, TwoLayerStackWithEveryActivation) {
  Rng rng(12);
  for (auto act : {Activation::relu, Activation::elu, Activation::tanh, Activation::sigmoid}) {
    for (int trial = 0; trial < 10; ++trial) {
      DenseParams l1{random_tensor(5, 4, rng), random_tensor(1, 4, rng, 0.1)};
      DenseParams l2{random_tensor(4, 1, rng), random_tensor(1, 1, rng, 0.1)};
      const Tensor x = random_tensor(6, 5, rng);
      Eigen::VectorXd y(6);
      y << 0, 1, 1, 0, 1, 0;
      const auto loss = [&] {
        Eigen::VectorXd dz;
        return sigmoid_bce_with_gradient(y, dense_forward(l2, activate(act, dense_forward(l1, x))).col(0), dz);
      };
      const Tensor pre = dense_forward(l1, x);
      const Tensor h = activate(act, pre);
      Eigen::VectorXd dz;
      sigmoid_bce_with_gradient(y, dense_forward(l2, h).col(0), dz);
      const auto g2 = dense_backward(l2, h, dz);
      const auto g1 = dense_backward(l1, x, g2.input.cwiseProduct(activate_derivative(act, pre)));
      const auto r = finite_difference_check(loss, {&l1.weights, &l1.bias, &l2.weights, &l2.bias},
                                             {g1.weights, g1.bias, g2.weights, g2.bias}, 1e-6, 1e-4);
      EXPECT_TRUE(r.passed) << to_string(act) << " " << r.max_relative_error;
    }
  }
}

TEST(GlorotInit, WithinLimitAndSeeded) {
  Rng a(1), b(1);
  Tensor wa(30, 20), wb(30, 20);
  glorot_uniform(wa, 30, 20, a);
  glorot_uniform(wb, 30, 20, b);
  EXPECT_EQ(wa, wb);
  EXPECT_LE(wa.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 50));
  EXPECT_GT(wa.cwiseAbs().maxCoeff(), 0.9 * std::sqrt(6.0 / 50));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(4);
  Tensor a = random_tensor(3, 4, rng), b = random_tensor(1, 7, rng);
  a(0, 0) = std::nextafter(1.0, 2.0);
  const auto dir = std::filesystem::temp_directory_path() / "fdia_nn_checkpoint";
  std::filesystem::remove_all(dir);
  write_checkpoint(dir, {{"note", "unit"}}, {{"a", &a}, {"b", &b}});
  EXPECT_EQ(std::filesystem::file_size(dir / "weights.bin"), (12u + 7u) * 8u);
  const auto manifest = read_manifest(dir);
  EXPECT_EQ(manifest.at("note"), "unit");
  EXPECT_EQ(manifest.at("weights").at("count"), 19);
  Tensor ra(3, 4), rb(1, 7);
  read_weights(dir, manifest, {{"a", &ra}, {"b", &rb}});
  EXPECT_EQ(std::memcmp(ra.data(), a.data(), 12 * 8), 0);
  EXPECT_EQ(std::memcmp(rb.data(), b.data(), 7 * 8), 0);
  Tensor wrong(4, 3);
  EXPECT_THROW(read_weights(dir, manifest, {{"a", &wrong}, {"b", &rb}}), ConfigError);
  EXPECT_THROW(read_weights(dir, manifest, {{"a", &ra}}), ConfigError);
  std::filesystem::remove_all(dir);
}
