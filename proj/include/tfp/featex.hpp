#pragma once

// Low-level features of the moving region: four segment features plus
// homogeneity, energy and entropy of gray-level co-occurrence matrices at
// four orientations, 16 values per frame.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tfp/error.hpp"
#include "tfp/grid.hpp"

namespace tfp::featex {

inline constexpr int kLevels = 8;
inline constexpr std::size_t kFeatureCount = 16;
inline constexpr double kDefaultEdgeThreshold = 100.0;

enum class Orientation { Deg0 = 0, Deg45 = 1, Deg90 = 2, Deg135 = 3 };
inline constexpr std::array<Orientation, 4> kOrientations{Orientation::Deg0, Orientation::Deg45,
                                                          Orientation::Deg90, Orientation::Deg135};

inline int degrees(Orientation o) { return 45 * static_cast<int>(o); }

// (row, col) displacement of the neighbor.
inline std::array<int, 2> displacement(Orientation o) {
  switch (o) {
    case Orientation::Deg0: return {0, 1};
    case Orientation::Deg45: return {-1, 1};
    case Orientation::Deg90: return {-1, 0};
    case Orientation::Deg135: return {-1, -1};
  }
  return {0, 0};
}

using LevelMatrix = Grid<std::uint8_t>;

struct Glcm {
  std::array<std::array<double, kLevels>, kLevels> probs{};
  Orientation orientation = Orientation::Deg0;
  std::size_t pair_count = 0;

  double operator()(int i, int j) const { return probs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]; }
  double sum() const {
    double s = 0.0;
    for (const auto& row : probs)
      for (double p : row) s += p;
    return s;
  }
};

struct TextureStats {
  double homogeneity = 0.0;
  double energy = 0.0;
  double entropy = 0.0;
};

struct FeatureVector {
  double area = 0.0;
  double perimeter = 0.0;
  double perimeter_area_ratio = 0.0;
  double edge_pixels = 0.0;
  // (homogeneity, energy, entropy) for 0, 45, 90, 135 degrees.
  std::array<double, 12> texture{};

  std::array<double, kFeatureCount> values() const {
    std::array<double, kFeatureCount> out{};
    out[0] = area;
    out[1] = perimeter;
    out[2] = perimeter_area_ratio;
    out[3] = edge_pixels;
    for (std::size_t i = 0; i < texture.size(); ++i) out[4 + i] = texture[i];
    return out;
  }

  static FeatureVector from_values(const std::array<double, kFeatureCount>& v) {
    FeatureVector f;
    f.area = v[0];
    f.perimeter = v[1];
    f.perimeter_area_ratio = v[2];
    f.edge_pixels = v[3];
    for (std::size_t i = 0; i < f.texture.size(); ++i) f.texture[i] = v[4 + i];
    return f;
  }
};

inline const std::array<const char*, kFeatureCount + 1>& csv_header() {
  static const std::array<const char*, kFeatureCount + 1> header{
      "frame", "area", "perimeter", "pa_ratio", "edges", "g0",  "e0",   "h0",   "g45",
      "e45",   "h45",  "g90",       "e90",      "h90",   "g135", "e135", "h135"};
  return header;
}

inline std::size_t segment_area(const MotionMask& mask) {
  std::size_t n = 0;
  for (auto v : mask.mask) n += v != 0;
  return n;
}

// Foreground pixels with a 4-neighbor that is background or off-image.
inline std::size_t segment_perimeter(const MotionMask& mask) {
  const std::size_t rows = mask.rows();
  const std::size_t cols = mask.cols();
  std::size_t n = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      if (!mask.at(r, c)) continue;
      const bool interior = r > 0 && c > 0 && r + 1 < rows && c + 1 < cols &&
                            mask.at(r - 1, c) && mask.at(r + 1, c) && mask.at(r, c - 1) &&
                            mask.at(r, c + 1);
      n += !interior;
    }
  return n;
}

// Sobel gradient magnitude with replicated borders.
inline Grid<double> sobel_magnitude(const Frame& frame) {
  const auto rows = static_cast<long>(frame.rows());
  const auto cols = static_cast<long>(frame.cols());
  Grid<double> out(frame.rows(), frame.cols(), 0.0);
  auto px = [&](long r, long c) {
    r = std::clamp(r, 0L, rows - 1);
    c = std::clamp(c, 0L, cols - 1);
    return static_cast<double>(frame.pixels(static_cast<std::size_t>(r), static_cast<std::size_t>(c)));
  };
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      const double gx = (px(r - 1, c + 1) + 2 * px(r, c + 1) + px(r + 1, c + 1)) -
                        (px(r - 1, c - 1) + 2 * px(r, c - 1) + px(r + 1, c - 1));
      const double gy = (px(r + 1, c - 1) + 2 * px(r + 1, c) + px(r + 1, c + 1)) -
                        (px(r - 1, c - 1) + 2 * px(r - 1, c) + px(r - 1, c + 1));
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = std::sqrt(gx * gx + gy * gy);
    }
  return out;
}

inline std::size_t edge_pixel_count(const Frame& frame, const MotionMask& mask,
                                    double threshold = kDefaultEdgeThreshold) {
  require_same_shape(frame, mask, "edge_pixel_count");
  const Grid<double> mag = sobel_magnitude(frame);
  std::size_t n = 0;
  for (std::size_t r = 0; r < frame.rows(); ++r)
    for (std::size_t c = 0; c < frame.cols(); ++c) n += mask.at(r, c) && mag(r, c) > threshold;
  return n;
}

inline LevelMatrix quantize8(const Frame& frame) {
  LevelMatrix out(frame.rows(), frame.cols());
  for (std::size_t i = 0; i < frame.pixels.size(); ++i)
    out.data()[i] = static_cast<std::uint8_t>(std::min(7, frame.pixels.data()[i] / 32));
  return out;
}

// Ordered co-occurrence counts over pixel pairs that are both inside the
// mask, normalized to probabilities.
inline Glcm glcm(const LevelMatrix& levels, const MotionMask& mask, Orientation orientation) {
  if (levels.rows() != mask.rows() || levels.cols() != mask.cols())
    throw InputError("glcm: level matrix and mask differ in shape");
  Glcm g;
  g.orientation = orientation;
  const auto [dr, dc] = displacement(orientation);
  const auto rows = static_cast<long>(levels.rows());
  const auto cols = static_cast<long>(levels.cols());
  std::array<std::array<std::size_t, kLevels>, kLevels> counts{};
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      const long r2 = r + dr;
      const long c2 = c + dc;
      if (r2 < 0 || r2 >= rows || c2 < 0 || c2 >= cols) continue;
      const auto a = static_cast<std::size_t>(r);
      const auto b = static_cast<std::size_t>(c);
      const auto a2 = static_cast<std::size_t>(r2);
      const auto b2 = static_cast<std::size_t>(c2);
      if (!mask.at(a, b) || !mask.at(a2, b2)) continue;
      ++counts[levels(a, b)][levels(a2, b2)];
      ++g.pair_count;
    }
  if (g.pair_count == 0) return g;
  const double total = static_cast<double>(g.pair_count);
  for (int i = 0; i < kLevels; ++i)
    for (int j = 0; j < kLevels; ++j)
      g.probs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          static_cast<double>(counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) / total;
  return g;
}

// Entropy uses the conventional -sum p log p (natural log).
inline TextureStats texture_features(const Glcm& g) {
  TextureStats s;
  for (int i = 0; i < kLevels; ++i)
    for (int j = 0; j < kLevels; ++j) {
      const double p = g(i, j);
      if (p <= 0.0) continue;
      s.homogeneity += p / (1.0 + std::abs(i - j));
      s.energy += p * p;
      s.entropy -= p * std::log(p);
    }
  return s;
}

inline FeatureVector extract_features(const Frame& frame, const MotionMask& mask,
                                      double edge_threshold = kDefaultEdgeThreshold) {
  require_same_shape(frame, mask, "extract_features");
  FeatureVector f;
  const std::size_t area = segment_area(mask);
  if (area == 0) return f;
  f.area = static_cast<double>(area);
  f.perimeter = static_cast<double>(segment_perimeter(mask));
  f.perimeter_area_ratio = f.perimeter / f.area;
  f.edge_pixels = static_cast<double>(edge_pixel_count(frame, mask, edge_threshold));
  const LevelMatrix levels = quantize8(frame);
  for (std::size_t k = 0; k < kOrientations.size(); ++k) {
    const TextureStats s = texture_features(glcm(levels, mask, kOrientations[k]));
    f.texture[3 * k + 0] = s.homogeneity;
    f.texture[3 * k + 1] = s.energy;
    f.texture[3 * k + 2] = s.entropy;
  }
  return f;
}

}  // namespace tfp::featex
