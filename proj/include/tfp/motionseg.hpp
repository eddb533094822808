#pragma once

// Motion segmentation with a mixture of dynamic textures. The video is cut
// into a bag of spatio-temporal patches, the patches are clustered by
// (classification) EM over K linear dynamical systems, and every pixel is
// labeled by a vote of the patches covering it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tfp/error.hpp"
#include "tfp/grid.hpp"
#include "tfp/lds.hpp"

namespace tfp::motionseg {

using lds::Index;
using lds::LdsParams;
using lds::Matrix;
using lds::ObservationSequence;
using lds::Vector;

struct PatchGeometry {
  std::size_t patch_rows = 7;
  std::size_t patch_cols = 7;
  std::size_t patch_len = 5;
  std::size_t stride_space = 4;
  std::size_t stride_time = 5;

  std::size_t obs_dim() const noexcept { return patch_rows * patch_cols; }

  void validate() const {
    if (patch_rows == 0 || patch_cols == 0 || patch_len == 0)
      throw InputError("patch dimensions must be positive");
    if (stride_space == 0 || stride_time == 0) throw InputError("patch strides must be positive");
  }

  friend bool operator==(const PatchGeometry&, const PatchGeometry&) = default;
};

struct Patch {
  std::size_t row = 0;    // top-left pixel row
  std::size_t col = 0;    // top-left pixel column
  std::size_t start = 0;  // first frame position within the clip
  ObservationSequence seq;  // (patch_rows*patch_cols) x patch_len, mean removed
};

struct PatchGrid {
  PatchGeometry geometry;
  std::size_t frame_rows = 0;
  std::size_t frame_cols = 0;
  std::size_t frame_count = 0;
  std::size_t positions_down = 0;
  std::size_t positions_across = 0;
  std::size_t windows = 0;
  std::vector<Patch> patches;

  std::size_t size() const noexcept { return patches.size(); }
};

struct DtMixture {
  std::vector<LdsParams> components;
  std::vector<double> weights;
  PatchGeometry geometry;

  std::size_t size() const noexcept { return components.size(); }
};

struct EmOptions {
  std::size_t max_iterations = 20;
  double relative_tolerance = 1e-4;
  // Slack allowed for a drop in total log-likelihood before an M-step is
  // rejected.
  double monotone_slack = 1e-6;
  std::uint64_t seed = 0;
};

struct EmFit {
  DtMixture mixture;
  std::vector<double> loglik_history;  // total log-likelihood per accepted iteration
  std::vector<std::size_t> labels;     // hard assignment per patch
  Matrix responsibilities;             // patches x K
  std::size_t iterations = 0;
  bool rejected_step = false;          // an M-step lowered the likelihood and was undone
};

namespace detail {

inline std::size_t window_count(std::size_t extent, std::size_t size, std::size_t stride) {
  return extent < size ? 0 : (extent - size) / stride + 1;
}

inline void check_frames(std::span<const Frame> frames) {
  if (frames.empty()) throw InputError("no frames");
  const std::size_t rows = frames.front().rows();
  const std::size_t cols = frames.front().cols();
  for (const Frame& f : frames)
    if (f.rows() != rows || f.cols() != cols)
      throw InputError("frames differ in shape (frame " + std::to_string(f.index) + ")");
}

}  // namespace detail

// Sliding-window patch extraction. Patches are ordered by spatial position
// (row-major), then by temporal window. Each patch has its scalar mean
// removed.
inline PatchGrid extract_patches(std::span<const Frame> frames, const PatchGeometry& geometry) {
  geometry.validate();
  detail::check_frames(frames);
  if (frames.size() < geometry.patch_len)
    throw InputError("extract_patches: " + std::to_string(frames.size()) +
                     " frames are fewer than the patch length " +
                     std::to_string(geometry.patch_len));
  PatchGrid grid;
  grid.geometry = geometry;
  grid.frame_rows = frames.front().rows();
  grid.frame_cols = frames.front().cols();
  grid.frame_count = frames.size();
  grid.positions_down =
      detail::window_count(grid.frame_rows, geometry.patch_rows, geometry.stride_space);
  grid.positions_across =
      detail::window_count(grid.frame_cols, geometry.patch_cols, geometry.stride_space);
  grid.windows = detail::window_count(grid.frame_count, geometry.patch_len, geometry.stride_time);
  if (grid.positions_down == 0 || grid.positions_across == 0)
    throw InputError("extract_patches: patch larger than frame");

  const auto m = static_cast<Index>(geometry.obs_dim());
  const auto len = static_cast<Index>(geometry.patch_len);
  grid.patches.reserve(grid.positions_down * grid.positions_across * grid.windows);
  for (std::size_t pr = 0; pr < grid.positions_down; ++pr) {
    for (std::size_t pc = 0; pc < grid.positions_across; ++pc) {
      const std::size_t r0 = pr * geometry.stride_space;
      const std::size_t c0 = pc * geometry.stride_space;
      for (std::size_t w = 0; w < grid.windows; ++w) {
        const std::size_t t0 = w * geometry.stride_time;
        Patch patch{r0, c0, t0, ObservationSequence{Matrix(m, len)}};
        for (Index t = 0; t < len; ++t) {
          const auto& px = frames[t0 + static_cast<std::size_t>(t)].pixels;
          Index k = 0;
          for (std::size_t r = 0; r < geometry.patch_rows; ++r)
            for (std::size_t c = 0; c < geometry.patch_cols; ++c)
              patch.seq.data(k++, t) = static_cast<double>(px(r0 + r, c0 + c));
        }
        patch.seq.data.array() -= patch.seq.data.mean();
        grid.patches.push_back(std::move(patch));
      }
    }
  }
  return grid;
}

// Log-likelihood of every patch under every component (patches x K).
inline Matrix component_logliks(const PatchGrid& grid, const std::vector<LdsParams>& components) {
  Matrix ll(static_cast<Index>(grid.size()), static_cast<Index>(components.size()));
  const auto horizon = static_cast<Index>(grid.geometry.patch_len);
  for (std::size_t k = 0; k < components.size(); ++k) {
    const lds::KalmanPlan plan(components[k], horizon);
    for (std::size_t i = 0; i < grid.size(); ++i)
      ll(static_cast<Index>(i), static_cast<Index>(k)) = plan.loglik(grid.patches[i].seq.data);
  }
  return ll;
}

namespace detail {

inline double log_sum_exp(const Vector& v) {
  const double hi = v.maxCoeff();
  if (!std::isfinite(hi)) return hi;
  return hi + std::log((v.array() - hi).exp().sum());
}

// Total data log-likelihood and responsibilities.
inline double e_step(const Matrix& ll, const std::vector<double>& weights, Matrix& resp) {
  const Index n = ll.rows();
  const Index k = ll.cols();
  resp.resize(n, k);
  double total = 0.0;
  Vector row(k);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < k; ++j)
      row(j) = weights[static_cast<std::size_t>(j)] > 0.0
                   ? std::log(weights[static_cast<std::size_t>(j)]) + ll(i, j)
                   : -std::numeric_limits<double>::infinity();
    const double lse = log_sum_exp(row);
    total += lse;
    resp.row(i) = (row.array() - lse).exp().transpose();
  }
  return total;
}

inline std::size_t argmax_row(const Matrix& m, Index i) {
  Index best = 0;
  for (Index j = 1; j < m.cols(); ++j)
    if (m(i, j) > m(i, best)) best = j;
  return static_cast<std::size_t>(best);
}

// Gives every empty component the worst-explained patches of the others.
inline void reseed_empty(std::vector<std::size_t>& labels, std::size_t K, const Matrix* ll,
                         std::size_t min_members) {
  std::vector<std::size_t> counts(K, 0);
  for (std::size_t l : labels) ++counts[l];
  for (std::size_t k = 0; k < K; ++k) {
    if (counts[k] > 0) continue;
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    if (ll != nullptr) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ll->row(static_cast<Index>(a)).maxCoeff() < ll->row(static_cast<Index>(b)).maxCoeff();
      });
    }
    std::size_t taken = 0;
    for (std::size_t i : order) {
      if (taken >= min_members) break;
      if (counts[labels[i]] <= min_members) continue;
      --counts[labels[i]];
      labels[i] = k;
      ++counts[k];
      ++taken;
    }
    if (taken == 0) throw InputError("em_fit_mixture: too few patches to populate every component");
  }
}

inline std::vector<LdsParams> m_step(const PatchGrid& grid, const std::vector<std::size_t>& labels,
                                     std::size_t K, Index n, std::vector<double>& weights) {
  std::vector<std::vector<const ObservationSequence*>> members(K);
  for (std::size_t i = 0; i < labels.size(); ++i)
    members[labels[i]].push_back(&grid.patches[i].seq);
  std::vector<LdsParams> out;
  out.reserve(K);
  weights.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    out.push_back(lds::learn_lds(members[k], n));
    weights[k] = static_cast<double>(members[k].size()) / static_cast<double>(labels.size());
  }
  return out;
}

}  // namespace detail

// Classification EM over a mixture of K dynamic textures with state
// dimension n. Initial labels are drawn uniformly from a seeded generator.
// An M-step that lowers the total log-likelihood by more than the slack is
// undone and iteration stops, so loglik_history is non-decreasing.
inline EmFit em_fit_mixture(const PatchGrid& grid, std::size_t K, Index n,
                            const EmOptions& opts = {}) {
  if (K < 1) throw InputError("em_fit_mixture: K must be >= 1");
  if (grid.size() < K)
    throw InputError("em_fit_mixture: " + std::to_string(grid.size()) +
                     " patches are fewer than K = " + std::to_string(K));
  const std::size_t N = grid.size();
  const std::size_t min_members =
      std::max<std::size_t>(1, (static_cast<std::size_t>(n) + grid.geometry.patch_len) /
                                   grid.geometry.patch_len);
  if (N < K * min_members)
    throw InputError("em_fit_mixture: too few patches for K components of state dimension " +
                     std::to_string(n));

  std::vector<std::size_t> labels(N, 0);
  {
    std::mt19937_64 gen(opts.seed);
    std::uniform_int_distribution<std::size_t> pick(0, K - 1);
    for (auto& l : labels) l = pick(gen);
  }
  detail::reseed_empty(labels, K, nullptr, min_members);

  EmFit fit;
  fit.mixture.geometry = grid.geometry;
  fit.mixture.components = detail::m_step(grid, labels, K, n, fit.mixture.weights);
  fit.labels = labels;

  DtMixture previous;
  std::vector<std::size_t> previous_labels;
  Matrix resp;
  for (std::size_t iter = 0; iter < std::max<std::size_t>(1, opts.max_iterations); ++iter) {
    const Matrix ll = component_logliks(grid, fit.mixture.components);
    const double total = detail::e_step(ll, fit.mixture.weights, resp);
    if (!std::isfinite(total)) throw NumericalError("em_fit_mixture: non-finite log-likelihood");
    if (!fit.loglik_history.empty() && total < fit.loglik_history.back() - opts.monotone_slack) {
      fit.mixture = std::move(previous);
      fit.labels = std::move(previous_labels);
      fit.rejected_step = true;
      break;
    }
    const bool converged =
        !fit.loglik_history.empty() &&
        std::abs(total - fit.loglik_history.back()) <=
            opts.relative_tolerance * std::abs(fit.loglik_history.back());
    fit.loglik_history.push_back(total);
    fit.responsibilities = resp;
    fit.iterations = iter + 1;
    if (converged || K == 1 || iter + 1 >= opts.max_iterations) break;

    std::vector<std::size_t> next(N);
    for (std::size_t i = 0; i < N; ++i) next[i] = detail::argmax_row(resp, static_cast<Index>(i));
    detail::reseed_empty(next, K, &ll, min_members);
    if (next == fit.labels) break;

    previous = fit.mixture;
    previous_labels = fit.labels;
    fit.labels = std::move(next);
    fit.mixture.components = detail::m_step(grid, fit.labels, K, n, fit.mixture.weights);
  }
  return fit;
}

// Component with the largest state-noise energy trace(Q); ties go to the
// lower index.
inline std::size_t motion_component(const DtMixture& mixture) {
  if (mixture.components.empty()) throw InputError("empty mixture");
  std::size_t best = 0;
  for (std::size_t k = 1; k < mixture.size(); ++k)
    if (mixture.components[k].Q.trace() > mixture.components[best].Q.trace()) best = k;
  return best;
}

// Maximum-likelihood component per patch (ties go to the lower index).
inline std::vector<std::size_t> assign_patches(const PatchGrid& grid, const DtMixture& mixture) {
  const Matrix ll = component_logliks(grid, mixture.components);
  std::vector<std::size_t> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = detail::argmax_row(ll, static_cast<Index>(i));
  return out;
}

// Pixel masks from per-patch motion flags. A pixel is foreground when
// strictly more than half of the patches covering it are motion patches.
// Border pixels and trailing frames that no patch reaches take the vote of
// the nearest covered position.
inline std::vector<MotionMask> vote_masks(const PatchGrid& grid, const std::vector<bool>& motion,
                                          std::span<const Frame> frames) {
  if (motion.size() != grid.size()) throw InputError("vote_masks: flag count mismatch");
  const PatchGeometry& g = grid.geometry;
  const std::size_t rows = grid.frame_rows;
  const std::size_t cols = grid.frame_cols;
  std::vector<Grid<std::uint32_t>> total(grid.frame_count, Grid<std::uint32_t>(rows, cols, 0));
  std::vector<Grid<std::uint32_t>> hits(grid.frame_count, Grid<std::uint32_t>(rows, cols, 0));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Patch& p = grid.patches[i];
    for (std::size_t t = p.start; t < p.start + g.patch_len; ++t)
      for (std::size_t r = p.row; r < p.row + g.patch_rows; ++r)
        for (std::size_t c = p.col; c < p.col + g.patch_cols; ++c) {
          ++total[t](r, c);
          if (motion[i]) ++hits[t](r, c);
        }
  }
  const std::size_t last_row = (grid.positions_down - 1) * g.stride_space + g.patch_rows - 1;
  const std::size_t last_col = (grid.positions_across - 1) * g.stride_space + g.patch_cols - 1;
  const std::size_t last_frame =
      grid.windows == 0 ? 0 : (grid.windows - 1) * g.stride_time + g.patch_len - 1;

  std::vector<MotionMask> masks;
  masks.reserve(grid.frame_count);
  for (std::size_t t = 0; t < grid.frame_count; ++t) {
    MotionMask mask{Grid<std::uint8_t>(rows, cols, 0), frames[t].index};
    const std::size_t st = std::min(t, last_frame);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t sr = std::min(r, last_row);
        const std::size_t sc = std::min(c, last_col);
        mask.mask(r, c) = 2 * hits[st](sr, sc) > total[st](sr, sc) ? 1 : 0;
      }
    masks.push_back(std::move(mask));
  }
  return masks;
}

inline void check_compatible(const DtMixture& mixture, const PatchGeometry& geometry) {
  if (mixture.components.empty()) throw InputError("segment_video: empty mixture");
  if (!(mixture.geometry == geometry))
    throw InputError("segment_video: mixture was fitted with a different patch geometry");
  for (const LdsParams& c : mixture.components)
    if (static_cast<std::size_t>(c.obs_dim()) != geometry.obs_dim())
      throw InputError("segment_video: component dimension " + std::to_string(c.obs_dim()) +
                       " does not match patch size " + std::to_string(geometry.obs_dim()));
}

// Per-frame motion masks for a clip using a fitted mixture.
inline std::vector<MotionMask> segment_video(std::span<const Frame> frames,
                                             const DtMixture& mixture,
                                             const PatchGeometry& geometry) {
  check_compatible(mixture, geometry);
  const PatchGrid grid = extract_patches(frames, geometry);
  const std::vector<std::size_t> labels = assign_patches(grid, mixture);
  const std::size_t target = motion_component(mixture);
  std::vector<bool> motion(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) motion[i] = labels[i] == target;
  return vote_masks(grid, motion, frames);
}

}  // namespace tfp::motionseg
