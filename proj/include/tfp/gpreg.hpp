#pragma once

// Gaussian-process count regression with the composite kernel
//
//   k(x_r, x_s) = b1 (x_r . x_s + 1) + b2 exp(-|x_r - x_s|^2 / b3) + b4 [r == s]
//
// Hyperparameters maximize the log marginal likelihood; prediction returns
// the posterior mean and variance.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "tfp/error.hpp"

namespace tfp::gpreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct KernelParams {
  double beta1 = 1.0;  // linear term weight
  double beta2 = 1.0;  // RBF amplitude
  double beta3 = 1.0;  // RBF length-scale denominator
  double beta4 = 0.1;  // i.i.d. noise

  std::array<double, 4> as_array() const { return {beta1, beta2, beta3, beta4}; }
  static KernelParams from_array(const std::array<double, 4>& b) { return {b[0], b[1], b[2], b[3]}; }

  // Weights may be zero (a term switched off); the length scale must be
  // strictly positive.
  void validate() const {
    for (double b : as_array())
      if (!std::isfinite(b) || b < 0.0) throw InputError("kernel parameters must be finite and >= 0");
    if (!(beta3 > 0.0)) throw InputError("beta3 must be > 0");
  }

  friend bool operator==(const KernelParams&, const KernelParams&) = default;
};

template <typename A, typename B>
double kernel_eval(const Eigen::MatrixBase<A>& xr, const Eigen::MatrixBase<B>& xs, bool same_index,
                   const KernelParams& beta) {
  if (xr.size() != xs.size()) throw InputError("kernel_eval: vectors differ in length");
  if (!xr.allFinite() || !xs.allFinite()) throw InputError("kernel_eval: non-finite input");
  const double dot = xr.dot(xs);
  const double dist2 = (xr - xs).squaredNorm();
  return beta.beta1 * (dot + 1.0) + beta.beta2 * std::exp(-dist2 / beta.beta3) +
         (same_index ? beta.beta4 : 0.0);
}

namespace detail {

inline Matrix squared_distances(const Matrix& a, const Matrix& b) {
  const Vector na = a.rowwise().squaredNorm();
  const Vector nb = b.rowwise().squaredNorm();
  Matrix d = (-2.0 * a * b.transpose()).eval();
  d.colwise() += na;
  d.rowwise() += nb.transpose();
  return d.cwiseMax(0.0);
}

}  // namespace detail

// K(X, X) including the noise term on the diagonal.
inline Matrix gram(const Matrix& X, const KernelParams& beta) {
  Matrix k = beta.beta1 * (X * X.transpose()).array() + beta.beta1;
  k.array() += beta.beta2 * (-detail::squared_distances(X, X).array() / beta.beta3).exp();
  k.diagonal().array() += beta.beta4;
  return 0.5 * (k + k.transpose());
}

// K(x*, X) for test points as rows of Xs; no noise term.
inline Matrix cross_kernel(const Matrix& Xs, const Matrix& X, const KernelParams& beta) {
  Matrix k = beta.beta1 * (Xs * X.transpose()).array() + beta.beta1;
  k.array() += beta.beta2 * (-detail::squared_distances(Xs, X).array() / beta.beta3).exp();
  return k;
}

struct GramFactor {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
};

// Cholesky with jitter escalation 1e-10 .. 1e-6 (relative to the mean
// diagonal) on failure.
inline GramFactor factor_gram(const Matrix& k) {
  GramFactor out;
  out.llt.compute(k);
  if (out.llt.info() == Eigen::Success && out.llt.matrixLLT().diagonal().allFinite()) return out;
  const double scale = std::max(k.diagonal().mean(), std::numeric_limits<double>::min());
  for (double eps = 1e-10; eps <= 1e-6 * 1.0001; eps *= 10.0) {
    Matrix kj = k;
    kj.diagonal().array() += eps * scale;
    out.llt.compute(kj);
    if (out.llt.info() == Eigen::Success && out.llt.matrixLLT().diagonal().allFinite()) {
      out.jitter = eps * scale;
      return out;
    }
  }
  throw NumericalError("Gram matrix factorization failed after jitter escalation");
}

inline double log_marginal_likelihood(const Matrix& X, const Vector& f, const KernelParams& beta) {
  beta.validate();
  if (X.rows() < 1 || X.rows() != f.size())
    throw InputError("log_marginal_likelihood: need N >= 1 rows matching the targets");
  const GramFactor fac = factor_gram(gram(X, beta));
  const Vector z = fac.llt.matrixL().solve(f);
  const double logdet = 2.0 * fac.llt.matrixLLT().diagonal().array().log().sum();
  const double n = static_cast<double>(f.size());
  return -0.5 * z.squaredNorm() - 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

struct LmlGradient {
  double value = 0.0;
  std::array<double, 4> d_log_beta{};  // derivative w.r.t. log(beta_i)
};

// Value and analytic gradient of the log marginal likelihood with respect
// to log beta: d/dtheta = 0.5 tr((alpha alpha^T - K^-1) dK/dtheta).
inline LmlGradient lml_gradient(const Matrix& X, const Vector& f, const KernelParams& beta) {
  beta.validate();
  if (X.rows() < 1 || X.rows() != f.size()) throw InputError("lml_gradient: shape mismatch");
  const Index n = X.rows();
  const Matrix linear = (X * X.transpose()).array() + 1.0;
  const Matrix dist2 = detail::squared_distances(X, X);
  const Matrix rbf = (-dist2.array() / beta.beta3).exp();
  Matrix k = beta.beta1 * linear + beta.beta2 * rbf;
  k.diagonal().array() += beta.beta4;
  k = 0.5 * (k + k.transpose());
  const GramFactor fac = factor_gram(k);
  const Vector alpha = fac.llt.solve(f);
  const Matrix kinv = fac.llt.solve(Matrix::Identity(n, n));
  const Matrix w = alpha * alpha.transpose() - kinv;

  LmlGradient out;
  const double logdet = 2.0 * fac.llt.matrixLLT().diagonal().array().log().sum();
  out.value = -0.5 * f.dot(alpha) - 0.5 * logdet -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  // tr(W D) for symmetric W, D is the sum of elementwise products.
  out.d_log_beta[0] = 0.5 * beta.beta1 * (w.array() * linear.array()).sum();
  out.d_log_beta[1] = 0.5 * beta.beta2 * (w.array() * rbf.array()).sum();
  out.d_log_beta[2] =
      0.5 * beta.beta2 / beta.beta3 * (w.array() * rbf.array() * dist2.array()).sum();
  out.d_log_beta[3] = 0.5 * beta.beta4 * w.trace();
  return out;
}

// Per-dimension affine standardization fitted on training inputs.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer identity(Index d) { return {Vector::Zero(d), Vector::Ones(d)}; }

  static Standardizer fit(const Matrix& X) {
    Standardizer s;
    s.mean = X.colwise().mean().transpose();
    s.scale.resize(X.cols());
    for (Index j = 0; j < X.cols(); ++j) {
      const double var = (X.col(j).array() - s.mean(j)).square().mean();
      const double sd = std::sqrt(var);
      s.scale(j) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(j))) ? sd : 1.0;
    }
    return s;
  }

  Matrix apply(const Matrix& X) const {
    return (X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }

  Vector apply_row(const Vector& x) const { return (x - mean).array() / scale.array(); }
};

struct FitOptions {
  std::size_t max_iterations = 200;
  double gradient_tolerance = 1e-5;
  double initial_step = 1.0;
  double armijo = 1e-4;
  double min_step = 1e-12;
  bool standardize = true;
  // Which of log(beta1..beta4) the optimizer may move.
  std::array<bool, 4> active{true, true, true, true};
};

// Default starting point after standardization: (1, 1, d, 0.1).
inline KernelParams default_beta0(Index d) { return {1.0, 1.0, static_cast<double>(d), 0.1}; }

struct GpModel {
  Matrix X;  // raw training inputs, N x d
  Vector f;  // training targets
  KernelParams beta;
  Standardizer norm;
  Matrix Xs;  // standardized inputs
  Eigen::LLT<Matrix> chol;
  Vector alpha;
  double log_marginal = 0.0;
  double start_log_marginal = 0.0;
  std::size_t iterations = 0;

  Index dim() const noexcept { return X.cols(); }
  Index size() const noexcept { return X.rows(); }
};

// Builds the cached factorization for fixed hyperparameters.
inline GpModel make_model(Matrix X, Vector f, const KernelParams& beta, Standardizer norm) {
  beta.validate();
  if (X.rows() < 1 || X.rows() != f.size()) throw InputError("GP model: shape mismatch");
  if (norm.mean.size() != X.cols() || norm.scale.size() != X.cols())
    throw InputError("GP model: standardization does not match input dimension");
  if (!X.allFinite() || !f.allFinite()) throw InputError("GP model: non-finite training data");
  GpModel m;
  m.X = std::move(X);
  m.f = std::move(f);
  m.beta = beta;
  m.norm = std::move(norm);
  m.Xs = m.norm.apply(m.X);
  GramFactor fac = factor_gram(gram(m.Xs, beta));
  m.chol = std::move(fac.llt);
  m.alpha = m.chol.solve(m.f);
  const double logdet = 2.0 * m.chol.matrixLLT().diagonal().array().log().sum();
  m.log_marginal = -0.5 * m.f.dot(m.alpha) - 0.5 * logdet -
                   0.5 * static_cast<double>(m.f.size()) * std::log(2.0 * std::numbers::pi);
  m.start_log_marginal = m.log_marginal;
  return m;
}

// Gradient ascent in log-parameter space with backtracking (Armijo) line
// search. The returned model never has a lower log marginal likelihood
// than beta0.
inline GpModel fit(const Matrix& X, const Vector& f, const KernelParams& beta0,
                   const FitOptions& opts = {}) {
  if (X.rows() < 2) throw InputError("fit: need at least 2 training samples");
  if (X.rows() != f.size()) throw InputError("fit: inputs and targets differ in length");
  if (!X.allFinite() || !f.allFinite()) throw InputError("fit: non-finite training data");
  for (double b : beta0.as_array())
    if (!(b > 0.0) || !std::isfinite(b)) throw InputError("fit: beta0 must be strictly positive");

  const Standardizer norm = opts.standardize ? Standardizer::fit(X) : Standardizer::identity(X.cols());
  const Matrix Xs = norm.apply(X);

  auto to_beta = [](const std::array<double, 4>& t) {
    return KernelParams{std::exp(t[0]), std::exp(t[1]), std::exp(t[2]), std::exp(t[3])};
  };
  auto evaluate = [&](const std::array<double, 4>& t, LmlGradient& out) {
    try {
      out = lml_gradient(Xs, f, to_beta(t));
      return std::isfinite(out.value);
    } catch (const NumericalError&) {
      return false;
    }
  };

  std::array<double, 4> theta{};
  const auto b0 = beta0.as_array();
  for (std::size_t i = 0; i < 4; ++i) theta[i] = std::log(b0[i]);
  LmlGradient cur;
  if (!evaluate(theta, cur)) throw InputError("fit: objective is not finite at beta0");
  const double start = cur.value;

  auto masked = [&](const LmlGradient& g) {
    std::array<double, 4> d{};
    for (std::size_t i = 0; i < 4; ++i) d[i] = opts.active[i] ? g.d_log_beta[i] : 0.0;
    return d;
  };

  double step = opts.initial_step;
  std::size_t iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    const auto g = masked(cur);
    double gnorm2 = 0.0;
    for (double v : g) gnorm2 += v * v;
    if (std::sqrt(gnorm2) < opts.gradient_tolerance) break;
    bool accepted = false;
    LmlGradient trial;
    while (step >= opts.min_step) {
      std::array<double, 4> next = theta;
      for (std::size_t i = 0; i < 4; ++i) next[i] += step * g[i];
      if (evaluate(next, trial) && trial.value >= cur.value + opts.armijo * step * gnorm2) {
        theta = next;
        cur = trial;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    step = std::min(step * 2.0, 1e3);
  }

  GpModel model = make_model(X, f, to_beta(theta), norm);
  model.start_log_marginal = start;
  model.iterations = iter;
  return model;
}

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

// Posterior mean and variance at one test input. The test point counts as
// its own index, so the prior variance includes beta4.
inline Prediction predict(const GpModel& model, const Vector& xstar) {
  if (xstar.size() != model.dim())
    throw InputError("predict: input has " + std::to_string(xstar.size()) +
                     " dimensions, model expects " + std::to_string(model.dim()));
  if (!xstar.allFinite()) throw InputError("predict: non-finite input");
  const Vector xs = model.norm.apply_row(xstar);
  const Vector kstar = cross_kernel(xs.transpose(), model.Xs, model.beta).transpose();
  const double prior = kernel_eval(xs, xs, true, model.beta);
  const Vector v = model.chol.matrixL().solve(kstar);
  Prediction p;
  p.mean = kstar.dot(model.alpha);
  p.variance = std::max(0.0, prior - v.squaredNorm());
  return p;
}

// Nonnegative integer count: round half up, clamp at zero.
inline long round_count(double mean) {
  if (!std::isfinite(mean)) throw NumericalError("non-finite prediction");
  const double r = std::floor(mean + 0.5);
  return r < 0.0 ? 0L : static_cast<long>(r);
}

inline long predict_count(const GpModel& model, const Vector& xstar) {
  return round_count(predict(model, xstar).mean);
}

// Text format, version 1:
//   tfp-gp-model 1
//   dims <N> <d>
//   beta <b1> <b2> <b3> <b4>
//   mean <d values>
//   scale <d values>
//   X
//   <N rows of d values>
//   f
//   <N values, one per line>
inline void save_model(const GpModel& model, std::ostream& os) {
  const auto old_flags = os.flags();
  const auto old_prec = os.precision();
  os << std::setprecision(17);
  os << "tfp-gp-model 1\n";
  os << "dims " << model.size() << ' ' << model.dim() << '\n';
  os << "beta " << model.beta.beta1 << ' ' << model.beta.beta2 << ' ' << model.beta.beta3 << ' '
     << model.beta.beta4 << '\n';
  auto write_vec = [&](const char* tag, const Vector& v) {
    os << tag;
    for (Index i = 0; i < v.size(); ++i) os << ' ' << v(i);
    os << '\n';
  };
  write_vec("mean", model.norm.mean);
  write_vec("scale", model.norm.scale);
  os << "X\n";
  for (Index r = 0; r < model.X.rows(); ++r) {
    for (Index c = 0; c < model.X.cols(); ++c) os << (c ? " " : "") << model.X(r, c);
    os << '\n';
  }
  os << "f\n";
  for (Index i = 0; i < model.f.size(); ++i) os << model.f(i) << '\n';
  os.flags(old_flags);
  os.precision(old_prec);
}

inline GpModel load_model(std::istream& is) {
  auto expect = [&](const std::string& tag) {
    std::string got;
    if (!(is >> got) || got != tag)
      throw InputError("model file: expected '" + tag + "', found '" + got + "'");
  };
  auto read = [&](double& v) {
    if (!(is >> v)) throw InputError("model file: truncated or malformed number");
  };
  expect("tfp-gp-model");
  int version = 0;
  if (!(is >> version) || version != 1)
    throw InputError("model file: unsupported version " + std::to_string(version));
  expect("dims");
  long n = 0, d = 0;
  if (!(is >> n >> d) || n < 1 || d < 1) throw InputError("model file: bad dims");
  expect("beta");
  std::array<double, 4> b{};
  for (double& v : b) read(v);
  Standardizer norm{Vector(d), Vector(d)};
  expect("mean");
  for (Index i = 0; i < d; ++i) read(norm.mean(i));
  expect("scale");
  for (Index i = 0; i < d; ++i) read(norm.scale(i));
  Matrix X(n, d);
  expect("X");
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < d; ++c) read(X(r, c));
  Vector f(n);
  expect("f");
  for (Index i = 0; i < n; ++i) read(f(i));
  return make_model(std::move(X), std::move(f), KernelParams::from_array(b), std::move(norm));
}

}  // namespace tfp::gpreg
