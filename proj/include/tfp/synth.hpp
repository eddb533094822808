#pragma once

// Synthetic traffic scenes: a static noisy background with textured
// rectangles ("vehicles") translating across it. Ground truth is the number
// of vehicles with at least half of their area on screen.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "tfp/error.hpp"
#include "tfp/grid.hpp"

namespace tfp::pipeline {

struct Dataset {
  std::vector<Frame> frames;
  std::map<std::size_t, long> truth;  // frame index -> vehicle count

  std::size_t size() const noexcept { return frames.size(); }

  void validate() const {
    for (std::size_t i = 0; i < frames.size(); ++i)
      if (frames[i].index != i) throw InputError("dataset frame indices must be contiguous from 0");
    for (const auto& [k, v] : truth) {
      if (k >= frames.size()) throw InputError("truth refers to frame " + std::to_string(k) + " beyond the dataset");
      if (v < 0) throw InputError("truth counts must be nonnegative");
    }
  }
};

// One vehicle with an explicit trajectory: top-left at frame `enter` is
// (row, col) and moves by (drow, dcol) pixels per frame.
struct VehicleSpec {
  std::size_t enter = 0;
  double row = 0.0;
  double col = 0.0;
  double drow = 0.0;
  double dcol = 0.0;
  std::size_t height = 13;
  std::size_t width = 13;
};

struct SynthConfig {
  std::size_t rows = 160;
  std::size_t cols = 110;
  std::size_t frames = 300;

  double background_level = 110.0;
  double background_texture = 20.0;  // static per-pixel uniform half-range
  double background_noise = 2.0;     // per-frame Gaussian sigma

  double vehicle_contrast = 60.0;  // vehicle mean minus background level
  double vehicle_texture = 30.0;   // static per-vehicle pattern half-range
  double flicker = 20.0;           // per-frame per-pixel uniform half-range

  // Random traffic: vertical lanes, at most one vehicle per lane. Ignored
  // when `vehicles` is non-empty.
  std::size_t lanes = 4;
  std::size_t vehicle_rows = 16;
  std::size_t vehicle_cols = 12;
  double spawn_probability = 0.03;
  double speed_min = 1.0;
  double speed_max = 2.0;

  std::vector<VehicleSpec> vehicles;

  void validate() const {
    if (rows < 1 || cols < 1 || frames < 1) throw InputError("synth: frame shape and count must be positive");
    for (const VehicleSpec& v : vehicles)
      if (v.height > rows || v.width > cols || v.height == 0 || v.width == 0)
        throw InputError("synth: vehicle larger than frame");
    if (vehicles.empty()) {
      if (vehicle_rows > rows || vehicle_cols > cols) throw InputError("synth: vehicle larger than frame");
      if (lanes > 0 && vehicle_cols > cols / lanes) throw InputError("synth: vehicle wider than a lane");
      if (speed_min <= 0.0 || speed_max < speed_min) throw InputError("synth: bad speed range");
    }
  }
};

namespace detail {

inline std::uint8_t to_pixel(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

inline std::size_t visible_area(long top, long left, std::size_t h, std::size_t w, std::size_t rows,
                                std::size_t cols) {
  const long r0 = std::max(0L, top);
  const long r1 = std::min(static_cast<long>(rows), top + static_cast<long>(h));
  const long c0 = std::max(0L, left);
  const long c1 = std::min(static_cast<long>(cols), left + static_cast<long>(w));
  if (r1 <= r0 || c1 <= c0) return 0;
  return static_cast<std::size_t>((r1 - r0) * (c1 - c0));
}

// Random lane traffic as explicit vehicle specs.
inline std::vector<VehicleSpec> random_traffic(const SynthConfig& cfg, std::mt19937_64& gen) {
  std::vector<VehicleSpec> out;
  if (cfg.lanes == 0) return out;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> speed(cfg.speed_min, cfg.speed_max);
  const double lane_width = static_cast<double>(cfg.cols) / static_cast<double>(cfg.lanes);
  std::vector<double> free_at(cfg.lanes, 0.0);
  const double travel = static_cast<double>(cfg.rows + cfg.vehicle_rows);
  for (std::size_t t = 0; t < cfg.frames; ++t)
    for (std::size_t lane = 0; lane < cfg.lanes; ++lane) {
      const double u = unit(gen);
      if (static_cast<double>(t) < free_at[lane] || u >= cfg.spawn_probability) continue;
      VehicleSpec v;
      v.enter = t;
      v.height = cfg.vehicle_rows;
      v.width = cfg.vehicle_cols;
      v.drow = std::round(speed(gen) * 4.0) / 4.0;
      v.row = -static_cast<double>(cfg.vehicle_rows);
      v.col = std::floor(lane_width * static_cast<double>(lane) +
                         (lane_width - static_cast<double>(cfg.vehicle_cols)) / 2.0);
      free_at[lane] = static_cast<double>(t) + travel / v.drow + 1.0;
      out.push_back(v);
    }
  return out;
}

}  // namespace detail

// Renders the scene; frames and truth are deterministic for a given seed.
inline Dataset synth_scene(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  Grid<double> background(cfg.rows, cfg.cols);
  for (auto& v : background) v = cfg.background_level + cfg.background_texture * unit(gen);

  const std::vector<VehicleSpec> vehicles =
      cfg.vehicles.empty() ? detail::random_traffic(cfg, gen) : cfg.vehicles;
  std::vector<Grid<double>> patterns;
  patterns.reserve(vehicles.size());
  for (const VehicleSpec& v : vehicles) {
    Grid<double> p(v.height, v.width);
    for (auto& x : p) x = cfg.vehicle_contrast + cfg.vehicle_texture * unit(gen);
    patterns.push_back(std::move(p));
  }

  Dataset ds;
  ds.frames.reserve(cfg.frames);
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    Grid<double> img = background;
    if (cfg.background_noise > 0.0)
      for (auto& v : img) v += cfg.background_noise * noise(gen);
    long count = 0;
    for (std::size_t k = 0; k < vehicles.size(); ++k) {
      const VehicleSpec& v = vehicles[k];
      if (t < v.enter) continue;
      const double dt = static_cast<double>(t - v.enter);
      const long top = static_cast<long>(std::floor(v.row + v.drow * dt + 0.5));
      const long left = static_cast<long>(std::floor(v.col + v.dcol * dt + 0.5));
      const std::size_t vis = detail::visible_area(top, left, v.height, v.width, cfg.rows, cfg.cols);
      if (vis == 0) continue;
      if (2 * vis >= v.height * v.width) ++count;
      for (std::size_t r = 0; r < v.height; ++r)
        for (std::size_t c = 0; c < v.width; ++c) {
          const long rr = top + static_cast<long>(r);
          const long cc = left + static_cast<long>(c);
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(cfg.rows) || cc >= static_cast<long>(cfg.cols))
            continue;
          const auto ur = static_cast<std::size_t>(rr);
          const auto uc = static_cast<std::size_t>(cc);
          img(ur, uc) = cfg.background_level + patterns[k](r, c) + cfg.flicker * unit(gen);
        }
    }
    Frame f{Grid<std::uint8_t>(cfg.rows, cfg.cols), t};
    for (std::size_t i = 0; i < img.size(); ++i) f.pixels.data()[i] = detail::to_pixel(img.data()[i]);
    ds.frames.push_back(std::move(f));
    ds.truth[t] = count;
  }
  return ds;
}

}  // namespace tfp::pipeline
