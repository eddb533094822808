#pragma once

// Baseline vehicle counter: per-pixel adaptive Gaussian mixture foreground
// detection, morphological opening, and 8-connected blob analysis with an
// area threshold. The count for a frame is the number of surviving blobs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tfp/error.hpp"
#include "tfp/grid.hpp"

namespace tfp::gmmbase {

struct GmmConfig {
  std::size_t components = 3;   // Kg
  double learning_rate = 0.01;  // alpha
  double background_fraction = 0.7;  // Tb
  double match_radius = 2.5;    // lambda, in standard deviations
  double initial_variance = 900.0;
  double variance_floor = 4.0;

  void validate() const {
    if (components < 1) throw InputError("gmm: need at least one component");
    if (!(learning_rate > 0.0 && learning_rate < 1.0)) throw InputError("gmm: learning rate must be in (0,1)");
    if (!(background_fraction > 0.0 && background_fraction < 1.0))
      throw InputError("gmm: background fraction must be in (0,1)");
    if (!(match_radius > 0.0)) throw InputError("gmm: match radius must be > 0");
    if (!(variance_floor > 0.0) || initial_variance < variance_floor)
      throw InputError("gmm: variances must be positive and above the floor");
  }
};

struct Gaussian {
  double mean = 0.0;
  double variance = 0.0;
  double weight = 0.0;
};

// Per-pixel mixture state. Components of each pixel are kept sorted by
// weight / sigma, descending.
class PixelGmm {
 public:
  PixelGmm(std::size_t rows, std::size_t cols, GmmConfig config = {})
      : rows_(rows), cols_(cols), config_(config),
        state_(rows * cols * config.components), used_(rows * cols, 0) {
    config_.validate();
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  const GmmConfig& config() const noexcept { return config_; }

  std::span<const Gaussian> pixel(std::size_t r, std::size_t c) const {
    const std::size_t i = r * cols_ + c;
    return {state_.data() + i * config_.components, used_[i]};
  }

  // Updates the model with one frame and returns its foreground mask.
  MotionMask update(const Frame& frame) {
    if (frame.rows() != rows_ || frame.cols() != cols_)
      throw InputError("gmm_update: frame shape does not match the model");
    MotionMask out{Grid<std::uint8_t>(rows_, cols_, 0), frame.index};
    for (std::size_t i = 0; i < rows_ * cols_; ++i)
      out.mask.data()[i] = update_pixel(i, static_cast<double>(frame.pixels.data()[i])) ? 1 : 0;
    return out;
  }

 private:
  static double rank(const Gaussian& g) { return g.weight / std::sqrt(g.variance); }

  bool update_pixel(std::size_t i, double v) {
    Gaussian* g = state_.data() + i * config_.components;
    std::size_t& used = used_[i];
    const double alpha = config_.learning_rate;

    if (used == 0) {
      g[0] = {v, config_.initial_variance, 1.0};
      used = 1;
      return false;
    }

    std::size_t matched = used;
    for (std::size_t k = 0; k < used; ++k) {
      const double d = v - g[k].mean;
      if (d * d <= config_.match_radius * config_.match_radius * g[k].variance) {
        matched = k;
        break;
      }
    }

    // Background components: shortest sorted prefix reaching Tb, judged on
    // the state before this frame's update.
    bool background = false;
    if (matched < used) {
      double cumulative = 0.0;
      for (std::size_t k = 0; k < used; ++k) {
        cumulative += g[k].weight;
        if (k == matched) {
          background = true;
          break;
        }
        if (cumulative >= config_.background_fraction) break;
      }
    }

    if (matched < used) {
      for (std::size_t k = 0; k < used; ++k) g[k].weight *= 1.0 - alpha;
      Gaussian& m = g[matched];
      m.weight += alpha;
      const double d = v - m.mean;
      m.mean += alpha * d;
      m.variance = std::max(config_.variance_floor, m.variance + alpha * (d * d - m.variance));
    } else {
      std::size_t slot = used;
      if (used < config_.components) {
        ++used;
      } else {
        slot = used - 1;  // lowest rank
      }
      g[slot] = {v, config_.initial_variance, alpha};
    }

    double total = 0.0;
    for (std::size_t k = 0; k < used; ++k) total += g[k].weight;
    for (std::size_t k = 0; k < used; ++k) g[k].weight /= total;
    std::stable_sort(g, g + used, [](const Gaussian& a, const Gaussian& b) { return rank(a) > rank(b); });
    return !background;
  }

  std::size_t rows_;
  std::size_t cols_;
  GmmConfig config_;
  std::vector<Gaussian> state_;
  std::vector<std::size_t> used_;
};

inline MotionMask gmm_update(PixelGmm& model, const Frame& frame) { return model.update(frame); }

// Square structuring element of odd side length.
struct StructuringElement {
  std::size_t size = 3;
};

inline MotionMask erode(const MotionMask& in, const StructuringElement& se = {}) {
  const long h = static_cast<long>(se.size / 2);
  const long rows = static_cast<long>(in.rows());
  const long cols = static_cast<long>(in.cols());
  MotionMask out{Grid<std::uint8_t>(in.rows(), in.cols(), 0), in.frame_index};
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      bool keep = true;
      for (long dr = -h; dr <= h && keep; ++dr)
        for (long dc = -h; dc <= h && keep; ++dc) {
          const long rr = r + dr;
          const long cc = c + dc;
          // Off-image counts as background.
          keep = rr >= 0 && rr < rows && cc >= 0 && cc < cols &&
                 in.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
        }
      out.mask(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = keep ? 1 : 0;
    }
  return out;
}

inline MotionMask dilate(const MotionMask& in, const StructuringElement& se = {}) {
  const long h = static_cast<long>(se.size / 2);
  const long rows = static_cast<long>(in.rows());
  const long cols = static_cast<long>(in.cols());
  MotionMask out{Grid<std::uint8_t>(in.rows(), in.cols(), 0), in.frame_index};
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      if (!in.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c))) continue;
      for (long rr = std::max(0L, r - h); rr <= std::min(rows - 1, r + h); ++rr)
        for (long cc = std::max(0L, c - h); cc <= std::min(cols - 1, c + h); ++cc)
          out.mask(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) = 1;
    }
  return out;
}

inline MotionMask morph_open(const MotionMask& mask, const StructuringElement& se = {}) {
  if (se.size == 0 || se.size % 2 == 0) throw InputError("structuring element size must be odd");
  return dilate(erode(mask, se), se);
}

struct Blob {
  std::size_t pixel_count = 0;
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  friend bool operator==(const Blob&, const Blob&) = default;
};

inline constexpr std::size_t kDefaultMinBlobArea = 150;

// 8-connected components with at least min_area pixels, ordered by
// (top, left).
inline std::vector<Blob> blob_analyze(const MotionMask& mask, std::size_t min_area = kDefaultMinBlobArea) {
  if (min_area < 1) throw InputError("blob_analyze: min_area must be >= 1");
  const std::size_t rows = mask.rows();
  const std::size_t cols = mask.cols();
  Grid<std::uint8_t> seen(rows, cols, 0);
  std::vector<Blob> blobs;
  std::vector<std::pair<std::size_t, std::size_t>> stack;
  for (std::size_t r0 = 0; r0 < rows; ++r0)
    for (std::size_t c0 = 0; c0 < cols; ++c0) {
      if (!mask.at(r0, c0) || seen(r0, c0)) continue;
      std::size_t count = 0;
      std::size_t top = r0, bottom = r0, left = c0, right = c0;
      stack.assign(1, {r0, c0});
      seen(r0, c0) = 1;
      while (!stack.empty()) {
        const auto [r, c] = stack.back();
        stack.pop_back();
        ++count;
        top = std::min(top, r);
        bottom = std::max(bottom, r);
        left = std::min(left, c);
        right = std::max(right, c);
        for (std::size_t rr = r == 0 ? 0 : r - 1; rr <= std::min(rows - 1, r + 1); ++rr)
          for (std::size_t cc = c == 0 ? 0 : c - 1; cc <= std::min(cols - 1, c + 1); ++cc)
            if (mask.at(rr, cc) && !seen(rr, cc)) {
              seen(rr, cc) = 1;
              stack.emplace_back(rr, cc);
            }
      }
      if (count >= min_area) blobs.push_back({count, top, left, bottom - top + 1, right - left + 1});
    }
  std::stable_sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) {
    return a.top != b.top ? a.top < b.top : a.left < b.left;
  });
  return blobs;
}

struct CounterConfig {
  GmmConfig gmm;
  StructuringElement se;
  std::size_t min_blob_area = kDefaultMinBlobArea;
  std::size_t burn_in = 0;
};

struct FrameCount {
  std::size_t frame = 0;
  std::size_t count = 0;
  bool burn_in = false;
  std::vector<Blob> blobs;
};

// Runs detector, opening and blob analysis over a clip. Burn-in frames
// still train the model but report 0.
inline std::vector<FrameCount> gmm_count(std::span<const Frame> frames, const CounterConfig& config) {
  if (frames.empty()) throw InputError("gmm_count: no frames");
  PixelGmm model(frames.front().rows(), frames.front().cols(), config.gmm);
  std::vector<FrameCount> out;
  out.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const MotionMask fg = model.update(frames[t]);
    FrameCount fc;
    fc.frame = frames[t].index;
    if (t < config.burn_in) {
      fc.burn_in = true;
    } else {
      fc.blobs = blob_analyze(morph_open(fg, config.se), config.min_blob_area);
      fc.count = fc.blobs.size();
    }
    out.push_back(std::move(fc));
  }
  return out;
}

}  // namespace tfp::gmmbase
