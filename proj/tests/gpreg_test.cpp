#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "tfp/gpreg.hpp"

using namespace tfp;
using namespace tfp::gpreg;
using oracle::Matrix;
using oracle::Vector;

namespace {

std::array<double, 4> random_beta(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.2, 2.0);
  return {u(gen), u(gen), u(gen) * 5.0, u(gen) * 0.5};
}

GpModel plain_model(const Matrix& X, const Vector& f, const std::array<double, 4>& b) {
  return make_model(X, f, KernelParams::from_array(b), Standardizer::identity(X.cols()));
}

}  // namespace

TEST(Kernel, HandValues) {
  const Vector z = Vector::Zero(3);
  const KernelParams ones{1, 1, 1, 1};
  EXPECT_EQ(kernel_eval(z, z, false, ones), 2.0);
  EXPECT_EQ(kernel_eval(z, z, true, ones), 3.0);
  Vector a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  EXPECT_NEAR(kernel_eval(a, b, false, {2, 1, 4, 0.5}), 2.0 + std::exp(-0.5), 1e-15);
  EXPECT_NEAR(kernel_eval(a, b, false, {2, 1, 4, 0.5}), 2.60653, 1e-5);
}

TEST(Kernel, Symmetric) {
  std::mt19937_64 gen(1);
  for (int i = 0; i < 50; ++i) {
    const Vector a = oracle::random_matrix(5, 1, gen);
    const Vector b = oracle::random_matrix(5, 1, gen);
    const KernelParams beta = KernelParams::from_array(random_beta(gen));
    EXPECT_EQ(kernel_eval(a, b, false, beta), kernel_eval(b, a, false, beta));
  }
}

TEST(KernelParams, Validation) {
  EXPECT_NO_THROW((KernelParams{0, 0, 1, 0}.validate()));
  EXPECT_THROW((KernelParams{-1, 1, 1, 1}.validate()), InputError);
  EXPECT_THROW((KernelParams{1, 1, 0, 1}.validate()), InputError);
}

TEST(Gram, PositiveDefiniteOnRandomInputs) {
  std::mt19937_64 gen(2);
  for (long n : {5L, 50L, 200L}) {
    const Matrix X = oracle::random_matrix(n, 4, gen);
    const Matrix k = gram(X, {1.0, 1.0, 4.0, 1e-6});
    Eigen::LLT<Matrix> llt(k);
    EXPECT_EQ(llt.info(), Eigen::Success) << n;
    EXPECT_EQ(k, k.transpose());
  }
}

TEST(LogMarginal, ScalarCases) {
  Matrix X = Matrix::Zero(1, 1);
  Vector f = Vector::Zero(1);
  // K = beta4 alone.
  EXPECT_NEAR(log_marginal_likelihood(X, f, {0, 0, 1, 1}), -0.5 * std::log(2 * std::numbers::pi), 1e-14);
  EXPECT_NEAR(log_marginal_likelihood(X, f, {0, 0, 1, 1}), -0.91894, 1e-5);
  f(0) = 1.0;
  // K = beta1 (0 + 1) + beta4 = 2.
  const double want = -0.25 - 0.5 * std::log(2.0) - 0.5 * std::log(2 * std::numbers::pi);
  EXPECT_NEAR(log_marginal_likelihood(X, f, {1, 0, 1, 1}), want, 1e-14);
  EXPECT_NEAR(log_marginal_likelihood(X, f, {1, 0, 1, 1}), -1.51551, 1e-5);
}

TEST(LogMarginal, MatchesNaiveOracle) {
  std::mt19937_64 gen(3);
  for (long n : {1L, 3L, 5L, 10L})
    for (long d : {1L, 3L, 17L}) {
      const Matrix X = oracle::random_matrix(n, d, gen);
      const Vector f = oracle::random_matrix(n, 1, gen, 3.0);
      const auto b = random_beta(gen);
      EXPECT_NEAR(log_marginal_likelihood(X, f, KernelParams::from_array(b)), oracle::gp_lml(X, f, b), 1e-8);
    }
}

TEST(Predict, MatchesNaiveOracle) {
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 25; ++trial) {
    const Matrix X = oracle::random_matrix(5, 17, gen);
    const Vector f = oracle::random_matrix(5, 1, gen, 3.0);
    const auto b = random_beta(gen);
    const GpModel m = plain_model(X, f, b);
    const Vector xs = oracle::random_matrix(17, 1, gen);
    const Prediction p = predict(m, xs);
    const auto [mean, var] = oracle::gp_predict(X, f, b, xs);
    EXPECT_NEAR(p.mean, mean, 1e-8);
    EXPECT_NEAR(p.variance, var, 1e-8);
  }
}

TEST(Gradient, MatchesCentralDifferences) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix X = oracle::random_matrix(8, 3, gen);
    const Vector f = oracle::random_matrix(8, 1, gen, 2.0);
    const auto b = random_beta(gen);
    const LmlGradient g = lml_gradient(X, f, KernelParams::from_array(b));
    EXPECT_NEAR(g.value, oracle::gp_lml(X, f, b), 1e-8);
    const double h = 1e-5;
    for (std::size_t i = 0; i < 4; ++i) {
      auto up = b, down = b;
      up[i] = std::exp(std::log(b[i]) + h);
      down[i] = std::exp(std::log(b[i]) - h);
      const double fd = (oracle::gp_lml(X, f, up) - oracle::gp_lml(X, f, down)) / (2 * h);
      EXPECT_NEAR(g.d_log_beta[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "trial " << trial << " beta" << i + 1;
    }
  }
}

TEST(Fit, NeverWorseThanStart) {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix X = oracle::random_matrix(30, 4, gen);
    Vector f(30);
    for (long i = 0; i < 30; ++i) f(i) = 2.0 * X(i, 0) - X(i, 1) * X(i, 1) + 0.1 * trial;
    const GpModel m = fit(X, f, default_beta0(4));
    EXPECT_GE(m.log_marginal, m.start_log_marginal);
    EXPECT_NEAR(m.log_marginal, log_marginal_likelihood(m.Xs, f, m.beta), 1e-9 * std::abs(m.log_marginal));
  }
}

TEST(Fit, StationaryAtGridOptimum) {
  // Only beta4 is free; locate its optimum with the naive likelihood on a
  // fine log grid refined by golden-section search.
  std::mt19937_64 gen(7);
  const Matrix X = oracle::random_matrix(12, 2, gen);
  const Vector f = oracle::random_matrix(12, 1, gen, 1.5);
  auto objective = [&](double t) { return oracle::gp_lml(X, f, {0.5, 1.0, 2.0, std::exp(t)}); };
  double best = -10.0;
  for (double t = -10.0; t <= 3.0; t += 0.01)
    if (objective(t) > objective(best)) best = t;
  double lo = best - 0.01, hi = best + 0.01;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int i = 0; i < 100; ++i) {
    const double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
    (objective(a) < objective(b) ? lo : hi) = objective(a) < objective(b) ? a : b;
  }
  const double t_star = 0.5 * (lo + hi);

  FitOptions opts;
  opts.standardize = false;
  opts.active = {false, false, false, true};
  const GpModel m = fit(X, f, {0.5, 1.0, 2.0, std::exp(t_star)}, opts);
  EXPECT_EQ(m.beta.beta1, 0.5);
  EXPECT_EQ(m.beta.beta2, 1.0);
  EXPECT_EQ(m.beta.beta3, 2.0);
  EXPECT_NEAR(std::log(m.beta.beta4), t_star, 1e-3);
  EXPECT_LE(m.iterations, 1u);
}

TEST(Fit, RecoversKnownHyperparameters) {
  const std::array<double, 4> truth{0.05, 2.0, 1.5, 0.1};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 gen(seed);
    const Matrix X = oracle::random_matrix(200, 2, gen);
    const Matrix k = oracle::gram(X, truth);
    const Eigen::LLT<Matrix> llt(k);
    const Vector f = llt.matrixL() * oracle::random_matrix(200, 1, gen);
    FitOptions opts;
    opts.standardize = false;
    const GpModel m = fit(X, f, {1.0, 1.0, 2.0, 0.5}, opts);
    auto within3 = [](double got, double want) { return got >= want / 3.0 && got <= want * 3.0; };
    EXPECT_TRUE(within3(m.beta.beta2, truth[1])) << "seed " << seed << " beta2 " << m.beta.beta2;
    EXPECT_TRUE(within3(m.beta.beta3, truth[2])) << "seed " << seed << " beta3 " << m.beta.beta3;
    EXPECT_TRUE(within3(m.beta.beta4, truth[3])) << "seed " << seed << " beta4 " << m.beta.beta4;
  }
}

TEST(Fit, InputErrors) {
  const Matrix X = Matrix::Zero(1, 2);
  EXPECT_THROW(fit(X, Vector::Zero(1), default_beta0(2)), InputError);
  EXPECT_THROW(fit(Matrix::Zero(3, 2), Vector::Zero(2), default_beta0(2)), InputError);
  EXPECT_THROW(fit(Matrix::Zero(3, 2), Vector::Zero(3), {0, 1, 1, 1}), InputError);
}

TEST(Predict, NoiseFreeInterpolation) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix X = oracle::random_matrix(6, 17, gen);
    const Vector f = oracle::random_matrix(6, 1, gen, 5.0);
    const GpModel m = plain_model(X, f, {1.0, 1.0, 17.0, 1e-12});
    for (long i = 0; i < 6; ++i) EXPECT_NEAR(predict(m, X.row(i).transpose()).mean, f(i), 1e-6);
  }
}

TEST(Predict, RevertsToPriorFarAway) {
  std::mt19937_64 gen(9);
  const Matrix X = oracle::random_matrix(10, 3, gen);
  const Vector f = oracle::random_matrix(10, 1, gen, 2.0);
  const GpModel m = plain_model(X, f, {0.0, 1.5, 1.0, 0.2});
  const Vector far = Vector::Constant(3, 1e3);
  const Prediction p = predict(m, far);
  EXPECT_NEAR(p.mean, 0.0, 1e-6);
  EXPECT_NEAR(p.variance, 1.7, 1e-6);
}

TEST(Predict, VarianceBoundedByPrior) {
  std::mt19937_64 gen(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix X = oracle::random_matrix(15, 4, gen);
    const Vector f = oracle::random_matrix(15, 1, gen);
    const auto b = random_beta(gen);
    const GpModel m = plain_model(X, f, b);
    const Vector xs = oracle::random_matrix(4, 1, gen);
    const Prediction p = predict(m, xs);
    EXPECT_GE(p.variance, 0.0);
    EXPECT_LE(p.variance, kernel_eval(xs, xs, true, m.beta) + 1e-10);
  }
}

TEST(Predict, DimensionMismatch) {
  const GpModel m = plain_model(Matrix::Identity(3, 3), Vector::Ones(3), {1, 1, 1, 0.1});
  EXPECT_THROW(predict(m, Vector::Zero(2)), InputError);
}

TEST(Standardizer, FitAndApply) {
  Matrix X(4, 2);
  X << 1, 5, 2, 5, 3, 5, 4, 5;
  const Standardizer s = Standardizer::fit(X);
  EXPECT_NEAR(s.mean(0), 2.5, 1e-15);
  EXPECT_NEAR(s.scale(0), std::sqrt(1.25), 1e-15);
  EXPECT_EQ(s.scale(1), 1.0);
  const Matrix Z = s.apply(X);
  EXPECT_NEAR(Z.col(0).mean(), 0.0, 1e-15);
  EXPECT_EQ(Z.col(1), Vector::Zero(4));
}

TEST(PredictCount, Rounding) {
  EXPECT_EQ(round_count(20.4), 20);
  EXPECT_EQ(round_count(-0.7), 0);
  EXPECT_EQ(round_count(19.5), 20);
  EXPECT_EQ(round_count(0.49), 0);
  EXPECT_THROW(round_count(std::nan("")), NumericalError);
}

TEST(ModelFile, RoundTripReproducesPredictions) {
  std::mt19937_64 gen(11);
  const Matrix X = oracle::random_matrix(20, 5, gen, 30.0);
  Vector f(20);
  for (long i = 0; i < 20; ++i) f(i) = std::round(std::abs(X(i, 0)) / 10.0);
  const GpModel m = fit(X, f, default_beta0(5));
  std::stringstream ss;
  save_model(m, ss);
  const std::string text = ss.str();
  EXPECT_EQ(text.rfind("tfp-gp-model 1\n", 0), 0u);
  const GpModel back = load_model(ss);
  EXPECT_EQ(back.beta, m.beta);
  EXPECT_EQ(back.X, m.X);
  EXPECT_EQ(back.f, m.f);
  for (int i = 0; i < 10; ++i) {
    const Vector xs = oracle::random_matrix(5, 1, gen, 30.0);
    EXPECT_EQ(predict(back, xs).mean, predict(m, xs).mean);
  }
  std::stringstream again;
  save_model(back, again);
  EXPECT_EQ(again.str(), text);
}

TEST(ModelFile, RejectsBadInput) {
  std::stringstream wrong("tfp-gp-model 2\n");
  EXPECT_THROW(load_model(wrong), InputError);
  std::stringstream truncated("tfp-gp-model 1\ndims 2 1\nbeta 1 1 1 0.1\nmean 0\nscale 1\nX\n1\n");
  EXPECT_THROW(load_model(truncated), InputError);
  std::stringstream junk("hello");
  EXPECT_THROW(load_model(junk), InputError);
}
