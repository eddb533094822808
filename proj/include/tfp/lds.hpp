#pragma once

// Linear dynamical system (dynamic texture) model:
//
//   x_{t+1} = F x_t + w_t,   w_t ~ N(0, Q)
//   y_t     = H x_t + v_t,   v_t ~ N(0, R)
//   x_1 ~ N(mu, P)
//
// Provides the exact data likelihood through the Kalman predict/update
// recursion, seeded sampling, and non-iterative subspace parameter learning.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "tfp/error.hpp"

namespace tfp::lds {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kCovarianceJitter = 1e-8;

struct LdsParams {
  Matrix F;   // n x n state transition
  Matrix H;   // m x n observation
  Matrix Q;   // n x n state noise covariance
  Matrix R;   // m x m observation noise covariance
  Vector mu;  // n initial state mean
  Matrix P;   // n x n initial state covariance

  Index state_dim() const noexcept { return F.rows(); }
  Index obs_dim() const noexcept { return H.rows(); }

  // Throws InputError when dimensions disagree or a covariance is not
  // symmetric positive semi-definite.
  void validate() const;
};

// One observation per column; data is m x T.
struct ObservationSequence {
  Matrix data;

  Index dim() const noexcept { return data.rows(); }
  Index length() const noexcept { return data.cols(); }

  void validate() const {
    if (data.cols() < 1 || data.rows() < 1)
      throw InputError("observation sequence must have at least one step");
    if (!data.allFinite()) throw InputError("observation sequence contains non-finite values");
  }
};

inline Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

// Symmetrizes and clamps negative eigenvalues to zero.
inline Matrix project_psd(const Matrix& a) {
  Matrix s = symmetrized(a);
  if (s.size() == 0) return s;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  if (eig.eigenvalues().minCoeff() >= 0.0) return s;
  Vector vals = eig.eigenvalues().cwiseMax(0.0);
  return symmetrized(eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose());
}

namespace detail {

inline void check_covariance(const Matrix& c, Index dim, const char* name) {
  if (c.rows() != dim || c.cols() != dim)
    throw InputError(std::string(name) + " must be " + std::to_string(dim) + "x" +
                     std::to_string(dim));
  if (!c.allFinite()) throw InputError(std::string(name) + " contains non-finite values");
  if (dim == 0) return;
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw InputError(std::string(name) + " is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(c, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
    throw InputError(std::string(name) + " is not positive semi-definite");
}

// Cholesky factor of a covariance. Factorizes as given first; a
// trace-scaled jitter is added only when that fails or the factor is
// numerically singular.
inline Eigen::LLT<Matrix> factor_covariance(const Matrix& s) {
  auto acceptable = [](const Eigen::LLT<Matrix>& llt) {
    if (llt.info() != Eigen::Success) return false;
    const Vector d = llt.matrixLLT().diagonal();
    if (!d.allFinite() || d.minCoeff() <= 0.0) return false;
    return d.minCoeff() * d.minCoeff() > 1e-14 * d.maxCoeff() * d.maxCoeff();
  };
  Eigen::LLT<Matrix> llt(s);
  if (acceptable(llt)) return llt;
  const double avg = s.trace() / static_cast<double>(s.rows());
  double jitter = kCovarianceJitter * (avg > 0.0 ? avg : 1.0);
  for (int attempt = 0; attempt < 6; ++attempt, jitter *= 10.0) {
    Matrix sj = s;
    sj.diagonal().array() += jitter;
    llt.compute(sj);
    if (acceptable(llt)) return llt;
  }
  throw NumericalError("covariance factorization failed after jitter escalation");
}

inline double log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace detail

inline void LdsParams::validate() const {
  const Index n = F.rows();
  const Index m = H.rows();
  if (n < 1 || m < 1) throw InputError("LDS dimensions must be positive");
  if (F.cols() != n) throw InputError("F must be square");
  if (H.cols() != n) throw InputError("H must be m x n");
  if (mu.size() != n) throw InputError("mu must have length n");
  if (!F.allFinite() || !H.allFinite() || !mu.allFinite())
    throw InputError("LDS parameters contain non-finite values");
  detail::check_covariance(Q, n, "Q");
  detail::check_covariance(R, m, "R");
  detail::check_covariance(P, n, "P");
}

// Data-independent part of the Kalman filter for a fixed horizon: the
// covariance recursion, innovation factors and gains do not depend on the
// observations, so they are computed once and reused across sequences.
class KalmanPlan {
 public:
  KalmanPlan(const LdsParams& params, Index horizon) : params_(params) {
    params_.validate();
    if (horizon < 1) throw InputError("Kalman horizon must be >= 1");
    const Index n = params_.state_dim();
    const Index m = params_.obs_dim();
    const Matrix& F = params_.F;
    const Matrix& H = params_.H;
    Matrix p_pred = symmetrized(params_.P);
    steps_.reserve(static_cast<std::size_t>(horizon));
    for (Index t = 0; t < horizon; ++t) {
      Matrix s = symmetrized(H * p_pred * H.transpose() + params_.R);
      Step step{detail::factor_covariance(s), 0.0, Matrix(n, m)};
      step.log_det = detail::log_det(step.chol);
      if (!std::isfinite(step.log_det))
        throw NumericalError("kalman: non-finite innovation determinant at time step " +
                             std::to_string(t + 1));
      // K = P_pred H^T S^-1
      step.gain = step.chol.solve(H * p_pred).transpose();
      Matrix p_filt = symmetrized(p_pred - step.gain * H * p_pred);
      p_pred = symmetrized(F * p_filt * F.transpose() + params_.Q);
      if (!p_pred.allFinite())
        throw NumericalError("kalman: non-finite state covariance at time step " +
                             std::to_string(t + 1));
      steps_.push_back(std::move(step));
    }
    const double log2pi = std::log(2.0 * std::numbers::pi);
    const_term_ = static_cast<double>(m) * log2pi;
  }

  Index horizon() const noexcept { return static_cast<Index>(steps_.size()); }
  const LdsParams& params() const noexcept { return params_; }

  // log p(y_1..y_T); T may be shorter than the planned horizon.
  template <typename Derived>
  double loglik(const Eigen::MatrixBase<Derived>& data) const {
    const Index m = params_.obs_dim();
    if (data.rows() != m)
      throw InputError("observation dimension " + std::to_string(data.rows()) +
                       " does not match model dimension " + std::to_string(m));
    if (data.cols() < 1 || data.cols() > horizon())
      throw InputError("sequence length outside the planned horizon");
    Vector x = params_.mu;
    Vector e(m);
    double total = 0.0;
    for (Index t = 0; t < data.cols(); ++t) {
      const Step& step = steps_[static_cast<std::size_t>(t)];
      e.noalias() = data.col(t) - params_.H * x;
      const Vector z = step.chol.matrixL().solve(e);
      const double term = z.squaredNorm() + step.log_det + const_term_;
      if (!std::isfinite(term))
        throw NumericalError("kalman: non-finite likelihood term at time step " +
                             std::to_string(t + 1));
      total -= 0.5 * term;
      x = params_.F * (x + step.gain * e);
    }
    return total;
  }

  double loglik(const ObservationSequence& seq) const { return loglik(seq.data); }

 private:
  struct Step {
    Eigen::LLT<Matrix> chol;
    double log_det;
    Matrix gain;
  };
  LdsParams params_;
  std::vector<Step> steps_;
  double const_term_ = 0.0;
};

// log p(y_1..y_T | params) by the Kalman predict/update recursion.
inline double kalman_loglik(const LdsParams& params, const ObservationSequence& seq) {
  if (seq.dim() != params.obs_dim())
    throw InputError("kalman_loglik: sequence dimension " + std::to_string(seq.dim()) +
                     " does not match model dimension " + std::to_string(params.obs_dim()));
  seq.validate();
  return KalmanPlan(params, seq.length()).loglik(seq.data);
}

namespace detail {

// Symmetric square root of a PSD matrix; tolerates singular input.
inline Matrix psd_sqrt(const Matrix& c) {
  if (c.size() == 0) return c;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(c));
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

inline Vector standard_normal(Index dim, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = normal(gen);
  return v;
}

}  // namespace detail

// Draws one sequence of length T; deterministic for a given seed.
inline ObservationSequence lds_sample(const LdsParams& params, Index T, std::uint64_t seed) {
  params.validate();
  if (T < 1) throw InputError("lds_sample: T must be >= 1");
  std::mt19937_64 gen(seed);
  const Matrix sq = detail::psd_sqrt(params.Q);
  const Matrix sr = detail::psd_sqrt(params.R);
  const Matrix sp = detail::psd_sqrt(params.P);
  const Index n = params.state_dim();
  const Index m = params.obs_dim();
  ObservationSequence out{Matrix(m, T)};
  Vector x = params.mu + sp * detail::standard_normal(n, gen);
  for (Index t = 0; t < T; ++t) {
    out.data.col(t) = params.H * x + sr * detail::standard_normal(m, gen);
    x = params.F * x + sq * detail::standard_normal(n, gen);
  }
  return out;
}

namespace detail {

inline const ObservationSequence& deref(const ObservationSequence& s) { return s; }
inline const ObservationSequence& deref(const ObservationSequence* s) { return *s; }
inline const ObservationSequence& deref(std::reference_wrapper<const ObservationSequence> s) {
  return s.get();
}

}  // namespace detail

// Structure imposed on the learned observation noise R.
enum class NoiseModel { isotropic, diagonal, full };

// Subspace (SVD) learning: H from the leading eigenvectors of the
// observation scatter, F by least squares on consecutive states, Q and R
// from residual covariances (R reduced to `noise` structure), mu and P from the first states (P from all
// states when there are no more sequences than state dimensions).
//
// `sequences` is any range of ObservationSequence values, pointers or
// reference_wrappers.
template <typename Range>
LdsParams learn_lds(const Range& sequences, Index n, NoiseModel noise = NoiseModel::isotropic) {
  Index m = -1;
  Index total_steps = 0;
  Index count = 0;
  for (const auto& item : sequences) {
    const ObservationSequence& s = detail::deref(item);
    s.validate();
    if (m < 0) m = s.dim();
    if (s.dim() != m) throw InputError("learn_lds: sequences have differing dimensions");
    total_steps += s.length();
    ++count;
  }
  if (count == 0) throw InputError("learn_lds: no sequences");
  if (n < 1) throw InputError("learn_lds: state dimension must be >= 1");
  if (n > m)
    throw InputError("learn_lds: state dimension " + std::to_string(n) +
                     " exceeds observation dimension " + std::to_string(m));
  if (total_steps <= n)
    throw InputError("learn_lds: state dimension " + std::to_string(n) + " needs more than " +
                     std::to_string(n) + " time steps, got " + std::to_string(total_steps));

  Matrix scatter = Matrix::Zero(m, m);
  for (const auto& item : sequences)
    scatter.selfadjointView<Eigen::Lower>().rankUpdate(detail::deref(item).data);
  scatter = scatter.selfadjointView<Eigen::Lower>();

  Eigen::SelfAdjointEigenSolver<Matrix> eig(scatter);
  if (eig.info() != Eigen::Success) throw NumericalError("learn_lds: eigendecomposition failed");
  // Eigenvalues are ascending; take the last n columns in descending order.
  Matrix H(m, n);
  for (Index k = 0; k < n; ++k) {
    Vector col = eig.eigenvectors().col(m - 1 - k);
    Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0.0) col = -col;
    H.col(k) = col;
  }

  Matrix cross = Matrix::Zero(n, n);  // sum x_{t+1} x_t^T
  Matrix prev = Matrix::Zero(n, n);   // sum x_t x_t^T over t < T
  Vector first_sum = Vector::Zero(n);
  Matrix first_scatter = Matrix::Zero(n, n);
  Index pairs = 0;
  std::vector<Matrix> states;
  states.reserve(static_cast<std::size_t>(count));
  for (const auto& item : sequences) {
    const ObservationSequence& s = detail::deref(item);
    Matrix x = H.transpose() * s.data;
    const Index T = x.cols();
    if (T > 1) {
      cross.noalias() += x.rightCols(T - 1) * x.leftCols(T - 1).transpose();
      prev.noalias() += x.leftCols(T - 1) * x.leftCols(T - 1).transpose();
      pairs += T - 1;
    }
    first_sum += x.col(0);
    first_scatter.noalias() += x.col(0) * x.col(0).transpose();
    states.push_back(std::move(x));
  }

  LdsParams out;
  out.H = H;
  if (pairs > 0) {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(prev);
    cod.setThreshold(1e-12);
    out.F = cod.solve(cross.transpose()).transpose();
  } else {
    out.F = Matrix::Zero(n, n);
  }

  Matrix q = Matrix::Zero(n, n);
  if (pairs > 0) {
    for (const Matrix& x : states) {
      const Index T = x.cols();
      if (T < 2) continue;
      const Matrix res = x.rightCols(T - 1) - out.F * x.leftCols(T - 1);
      q.noalias() += res * res.transpose();
    }
    q /= static_cast<double>(pairs);
  }
  out.Q = project_psd(q);

  const Matrix proj = Matrix::Identity(m, m) - H * H.transpose();
  const Matrix residual = project_psd(proj * scatter * proj.transpose() / static_cast<double>(total_steps));
  switch (noise) {
    case NoiseModel::isotropic:
      out.R = (residual.trace() / static_cast<double>(m)) * Matrix::Identity(m, m);
      break;
    case NoiseModel::diagonal:
      out.R = residual.diagonal().asDiagonal();
      break;
    case NoiseModel::full:
      out.R = residual;
      break;
  }

  const double c = static_cast<double>(count);
  out.mu = first_sum / c;
  if (count > n) {
    out.P = project_psd(first_scatter / c - out.mu * out.mu.transpose());
  } else {
    // Too few sequences to estimate an initial covariance; use the spread
    // of all states around mu instead.
    Matrix spread = Matrix::Zero(n, n);
    for (const Matrix& x : states) {
      const Matrix d = x.colwise() - out.mu;
      spread.noalias() += d * d.transpose();
    }
    out.P = project_psd(spread / static_cast<double>(total_steps));
  }
  return out;
}

inline LdsParams learn_lds(const std::vector<ObservationSequence>& sequences, Index n,
                           NoiseModel noise = NoiseModel::isotropic) {
  return learn_lds<std::vector<ObservationSequence>>(sequences, n, noise);
}

}  // namespace tfp::lds
