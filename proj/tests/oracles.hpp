#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the library's numerical paths: linear algebra is plain
// Gauss-Jordan elimination, LDS likelihoods come from the unrolled joint
// Gaussian, features and blobs from naive loops.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "tfp/grid.hpp"
#include "tfp/lds.hpp"

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Inverse and log-determinant by Gauss-Jordan with partial pivoting.
struct InverseDet {
  Matrix inverse;
  double log_det = 0.0;
  int sign = 1;
};

inline InverseDet gauss_jordan(const Matrix& a) {
  const long n = a.rows();
  std::vector<std::vector<double>> m(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(2 * n), 0.0));
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) m[i][j] = a(i, j);
    m[i][n + i] = 1.0;
  }
  InverseDet out;
  for (long col = 0; col < n; ++col) {
    long pivot = col;
    for (long r = col + 1; r < n; ++r)
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    if (m[pivot][col] == 0.0) throw std::runtime_error("singular matrix");
    if (pivot != col) {
      std::swap(m[pivot], m[col]);
      out.sign = -out.sign;
    }
    const double p = m[col][col];
    if (p < 0) out.sign = -out.sign;
    out.log_det += std::log(std::abs(p));
    for (long j = 0; j < 2 * n; ++j) m[col][j] /= p;
    for (long r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m[r][col];
      if (f == 0.0) continue;
      for (long j = 0; j < 2 * n; ++j) m[r][j] -= f * m[col][j];
    }
  }
  out.inverse.resize(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) out.inverse(i, j) = m[i][n + j];
  return out;
}

inline double gaussian_logpdf(const Vector& y, const Vector& mean, const Matrix& cov) {
  const InverseDet inv = gauss_jordan(cov);
  const Vector d = y - mean;
  double quad = 0.0;
  for (long i = 0; i < d.size(); ++i)
    for (long j = 0; j < d.size(); ++j) quad += d(i) * inv.inverse(i, j) * d(j);
  return -0.5 * (quad + inv.log_det + static_cast<double>(d.size()) * std::log(2.0 * std::numbers::pi));
}

// Unrolls the LDS into one Gaussian over the stacked observation vector.
inline double lds_joint_loglik(const tfp::lds::LdsParams& p, const Matrix& y) {
  const long n = p.F.rows();
  const long m = p.H.rows();
  const long T = y.cols();
  std::vector<Vector> mean_x(static_cast<std::size_t>(T));
  std::vector<Matrix> var_x(static_cast<std::size_t>(T));
  mean_x[0] = p.mu;
  var_x[0] = p.P;
  for (long t = 1; t < T; ++t) {
    mean_x[t] = p.F * mean_x[t - 1];
    var_x[t] = p.F * var_x[t - 1] * p.F.transpose() + p.Q;
  }
  Vector mean(m * T), stacked(m * T);
  Matrix cov = Matrix::Zero(m * T, m * T);
  for (long t = 0; t < T; ++t) {
    mean.segment(t * m, m) = p.H * mean_x[t];
    stacked.segment(t * m, m) = y.col(t);
    for (long s = 0; s <= t; ++s) {
      // Cov(x_t, x_s) = F^(t-s) Var(x_s)
      Matrix c = var_x[s];
      for (long k = s; k < t; ++k) c = p.F * c;
      Matrix block = p.H * c * p.H.transpose();
      if (s == t) block += p.R;
      cov.block(t * m, s * m, m, m) = block;
      cov.block(s * m, t * m, m, m) = block.transpose();
    }
  }
  (void)n;
  return gaussian_logpdf(stacked, mean, cov);
}

// Naive GP pieces with explicit inverse.
inline double kernel(const Vector& a, const Vector& b, bool same, const std::array<double, 4>& beta) {
  double dot = 0.0, d2 = 0.0;
  for (long i = 0; i < a.size(); ++i) {
    dot += a(i) * b(i);
    d2 += (a(i) - b(i)) * (a(i) - b(i));
  }
  return beta[0] * (dot + 1.0) + beta[1] * std::exp(-d2 / beta[2]) + (same ? beta[3] : 0.0);
}

inline Matrix gram(const Matrix& X, const std::array<double, 4>& beta) {
  Matrix k(X.rows(), X.rows());
  for (long r = 0; r < X.rows(); ++r)
    for (long s = 0; s < X.rows(); ++s) k(r, s) = kernel(X.row(r).transpose(), X.row(s).transpose(), r == s, beta);
  return k;
}

inline double gp_lml(const Matrix& X, const Vector& f, const std::array<double, 4>& beta) {
  return gaussian_logpdf(f, Vector::Zero(f.size()), gram(X, beta));
}

inline std::pair<double, double> gp_predict(const Matrix& X, const Vector& f, const std::array<double, 4>& beta,
                                            const Vector& xs) {
  const InverseDet inv = gauss_jordan(gram(X, beta));
  Vector k(X.rows());
  for (long r = 0; r < X.rows(); ++r) k(r) = kernel(xs, X.row(r).transpose(), false, beta);
  double mean = 0.0, quad = 0.0;
  for (long i = 0; i < X.rows(); ++i)
    for (long j = 0; j < X.rows(); ++j) {
      mean += k(i) * inv.inverse(i, j) * f(j);
      quad += k(i) * inv.inverse(i, j) * k(j);
    }
  return {mean, kernel(xs, xs, true, beta) - quad};
}

// Naive features: straight double loops over the definitions.
inline std::array<double, 16> naive_features(const tfp::Grid<std::uint8_t>& img, const tfp::Grid<std::uint8_t>& mask,
                                             double edge_threshold) {
  const long R = static_cast<long>(img.rows());
  const long C = static_cast<long>(img.cols());
  auto fg = [&](long r, long c) { return r >= 0 && c >= 0 && r < R && c < C && mask(r, c) != 0; };
  auto px = [&](long r, long c) {
    r = r < 0 ? 0 : (r >= R ? R - 1 : r);
    c = c < 0 ? 0 : (c >= C ? C - 1 : c);
    return static_cast<double>(img(r, c));
  };
  std::array<double, 16> out{};
  double area = 0, perim = 0, edges = 0;
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) {
      if (!fg(r, c)) continue;
      area += 1;
      if (!fg(r - 1, c) || !fg(r + 1, c) || !fg(r, c - 1) || !fg(r, c + 1)) perim += 1;
      const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
      const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
      double gx = 0, gy = 0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          gx += kx[i][j] * px(r + i - 1, c + j - 1);
          gy += ky[i][j] * px(r + i - 1, c + j - 1);
        }
      if (std::hypot(gx, gy) > edge_threshold) edges += 1;
    }
  if (area == 0) return out;
  out[0] = area;
  out[1] = perim;
  out[2] = perim / area;
  out[3] = edges;
  const int disp[4][2] = {{0, 1}, {-1, 1}, {-1, 0}, {-1, -1}};
  for (int o = 0; o < 4; ++o) {
    double counts[8][8] = {};
    double total = 0;
    for (long r = 0; r < R; ++r)
      for (long c = 0; c < C; ++c) {
        const long r2 = r + disp[o][0];
        const long c2 = c + disp[o][1];
        if (!fg(r, c) || !fg(r2, c2)) continue;
        const int a = img(r, c) / 32 > 7 ? 7 : img(r, c) / 32;
        const int b = img(r2, c2) / 32 > 7 ? 7 : img(r2, c2) / 32;
        counts[a][b] += 1;
        total += 1;
      }
    double g = 0, e = 0, h = 0;
    if (total > 0)
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
          const double p = counts[i][j] / total;
          if (p == 0) continue;
          g += p / (1 + std::abs(i - j));
          e += p * p;
          h -= p * std::log(p);
        }
    out[4 + 3 * o] = g;
    out[5 + 3 * o] = e;
    out[6 + 3 * o] = h;
  }
  return out;
}

// Recursive-free flood fill with an explicit queue, 8-connectivity.
inline std::size_t flood_fill_count(const tfp::Grid<std::uint8_t>& mask, std::size_t min_area) {
  const long R = static_cast<long>(mask.rows());
  const long C = static_cast<long>(mask.cols());
  std::vector<int> label(static_cast<std::size_t>(R * C), 0);
  std::size_t blobs = 0;
  int next = 0;
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) {
      if (!mask(r, c) || label[r * C + c]) continue;
      ++next;
      std::vector<long> queue{r * C + c};
      label[r * C + c] = next;
      std::size_t size = 0;
      for (std::size_t q = 0; q < queue.size(); ++q) {
        ++size;
        const long pr = queue[q] / C, pc = queue[q] % C;
        for (long dr = -1; dr <= 1; ++dr)
          for (long dc = -1; dc <= 1; ++dc) {
            const long rr = pr + dr, cc = pc + dc;
            if (rr < 0 || cc < 0 || rr >= R || cc >= C) continue;
            if (mask(rr, cc) && !label[rr * C + cc]) {
              label[rr * C + cc] = next;
              queue.push_back(rr * C + cc);
            }
          }
      }
      if (size >= min_area) ++blobs;
    }
  return blobs;
}

// Random covariance A A^T + eps I.
inline Matrix random_spd(long n, std::mt19937_64& gen, double eps = 0.1) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) a(i, j) = normal(gen);
  Matrix s = a * a.transpose() / static_cast<double>(n);
  s.diagonal().array() += eps;
  return 0.5 * (s + s.transpose());
}

inline Matrix random_matrix(long r, long c, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix a(r, c);
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) a(i, j) = normal(gen);
  return a;
}

// Random LDS with spectral radius below `radius`.
inline tfp::lds::LdsParams random_lds(long n, long m, std::mt19937_64& gen, double radius = 0.9) {
  tfp::lds::LdsParams p;
  Matrix f = random_matrix(n, n, gen);
  const double rho = f.eigenvalues().cwiseAbs().maxCoeff();
  p.F = f * (radius / std::max(rho, 1e-9));
  p.H = random_matrix(m, n, gen);
  p.Q = random_spd(n, gen);
  p.R = random_spd(m, gen);
  p.mu = random_matrix(n, 1, gen);
  p.P = random_spd(n, gen);
  return p;
}

}  // namespace oracle
