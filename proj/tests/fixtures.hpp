#pragma once

// Synthetic data sets shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "tfp/motionseg.hpp"
#include "tfp/synth.hpp"

namespace fixture {

// Two sources of 7x7x5 patches: A has strong rotating dynamics, B is noise
// with no dynamics.
struct TwoSource {
  tfp::motionseg::PatchGrid grid;
  std::vector<std::size_t> truth;
};

inline TwoSource two_source_patches(std::uint64_t seed, std::size_t per_source) {
  std::mt19937_64 gen(seed);
  const long m = 49;
  tfp::lds::LdsParams a;
  const double ang = 0.4;
  a.F.resize(2, 2);
  a.F << 0.95 * std::cos(ang), -0.95 * std::sin(ang), 0.95 * std::sin(ang), 0.95 * std::cos(ang);
  a.H = oracle::random_matrix(m, 2, gen, 2.0);
  a.Q = oracle::Matrix::Identity(2, 2);
  a.R = oracle::Matrix::Identity(m, m);
  a.mu = oracle::Vector::Zero(2);
  a.P = 10.0 * oracle::Matrix::Identity(2, 2);

  tfp::lds::LdsParams b;
  b.F = oracle::Matrix::Zero(2, 2);
  b.H = oracle::random_matrix(m, 2, gen, 2.0);
  b.Q = oracle::Matrix::Identity(2, 2);
  b.R = oracle::Matrix::Identity(m, m);
  b.mu = oracle::Vector::Zero(2);
  b.P = oracle::Matrix::Identity(2, 2);

  TwoSource out;
  out.grid.geometry = tfp::motionseg::PatchGeometry{};
  out.grid.frame_rows = 7;
  out.grid.frame_cols = 7;
  out.grid.frame_count = 5;
  out.grid.positions_down = out.grid.positions_across = out.grid.windows = 1;
  for (std::size_t i = 0; i < 2 * per_source; ++i) {
    const std::size_t label = i % 2;
    tfp::motionseg::Patch p;
    p.seq = tfp::lds::lds_sample(label == 0 ? a : b, 5, seed * 100000 + i);
    out.grid.patches.push_back(std::move(p));
    out.truth.push_back(label);
  }
  return out;
}

inline double accuracy_up_to_permutation(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& truth) {
  std::size_t same = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) same += labels[i] == truth[i];
  const double acc = static_cast<double>(same) / static_cast<double>(labels.size());
  return std::max(acc, 1.0 - acc);
}

// One bright untextured 12x13 (156 px) blob entering at frame `burn_in`
// and sweeping down a 160x110 noisy background.
inline tfp::pipeline::SynthConfig one_blob_scene(std::size_t burn_in, std::size_t frames) {
  tfp::pipeline::SynthConfig cfg;
  cfg.frames = frames;
  cfg.vehicle_contrast = 100.0;
  cfg.vehicle_texture = 0.0;
  cfg.flicker = 0.0;
  tfp::pipeline::VehicleSpec v;
  v.enter = burn_in;
  v.row = 0;
  v.col = 40;
  v.drow = 1.0;
  v.height = 12;
  v.width = 13;
  cfg.vehicles = {v};
  return cfg;
}

}  // namespace fixture
