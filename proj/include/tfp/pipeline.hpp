#pragma once

// End-to-end orchestration: frame ingestion, train/test splits, the
// dynamic-texture + GP counter, the GMM baseline, and evaluation.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tfp/config.hpp"
#include "tfp/error.hpp"
#include "tfp/featex.hpp"
#include "tfp/gmmbase.hpp"
#include "tfp/gpreg.hpp"
#include "tfp/grid.hpp"
#include "tfp/motionseg.hpp"
#include "tfp/pgm.hpp"
#include "tfp/synth.hpp"

namespace tfp::pipeline {

// ---------------------------------------------------------------------------
// Ingestion

// Bilinear resize (pixel-center alignment, edge clamping) rounded half up.
inline Grid<std::uint8_t> resize_bilinear(const Grid<std::uint8_t>& src, std::size_t rows,
                                          std::size_t cols) {
  if (src.empty() || rows == 0 || cols == 0) throw InputError("resize: empty image or target");
  if (src.rows() == rows && src.cols() == cols) return src;
  Grid<std::uint8_t> out(rows, cols);
  const double sy = static_cast<double>(src.rows()) / static_cast<double>(rows);
  const double sx = static_cast<double>(src.cols()) / static_cast<double>(cols);
  const double max_y = static_cast<double>(src.rows() - 1);
  const double max_x = static_cast<double>(src.cols() - 1);
  for (std::size_t r = 0; r < rows; ++r) {
    const double y = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t y1 = std::min(y0 + 1, src.rows() - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(std::floor(x));
      const std::size_t x1 = std::min(x0 + 1, src.cols() - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = src(y0, x0) * (1.0 - fx) + src(y0, x1) * fx;
      const double bottom = src(y1, x0) * (1.0 - fx) + src(y1, x1) * fx;
      const double v = top * (1.0 - fy) + bottom * fy;
      out(r, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  }
  return out;
}

inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

// PGM frames ordered by file name, resized to rows x cols.
inline std::vector<Frame> load_frames(const std::filesystem::path& dir, std::size_t rows = 160,
                                      std::size_t cols = 110) {
  const auto files = list_images(dir);
  if (files.empty()) throw InputError("no PGM images in " + dir.string());
  std::vector<Frame> frames;
  frames.reserve(files.size());
  for (std::size_t i = 0; i < files.size(); ++i)
    frames.push_back({resize_bilinear(pgm::read_file(files[i]), rows, cols), i});
  return frames;
}

inline std::string indexed_name(const std::string& prefix, std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return prefix + digits + ".pgm";
}

inline void save_frames(const std::filesystem::path& dir, std::span<const Frame> frames) {
  std::filesystem::create_directories(dir);
  for (const Frame& f : frames) pgm::write_file(dir / indexed_name("frame_", f.index), f.pixels);
}

inline void save_masks(const std::filesystem::path& dir, std::span<const MotionMask> masks) {
  std::filesystem::create_directories(dir);
  for (const MotionMask& m : masks) pgm::write_mask(dir / indexed_name("mask_", m.frame_index), m);
}

inline std::vector<MotionMask> load_masks(const std::filesystem::path& dir) {
  const auto files = list_images(dir);
  if (files.empty()) throw InputError("no PGM masks in " + dir.string());
  std::vector<MotionMask> masks;
  for (std::size_t i = 0; i < files.size(); ++i) masks.push_back(pgm::read_mask(files[i], i));
  return masks;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  enum class Kind { PrefixFraction, MiddleBlock };
  Kind kind = Kind::PrefixFraction;
  double fraction = 0.6;
  std::size_t block_len = 0;

  static SplitSpec prefix(double fraction) { return {Kind::PrefixFraction, fraction, 0}; }
  static SplitSpec middle(std::size_t len) { return {Kind::MiddleBlock, 0.0, len}; }

  // "prefix:0.6" or "middle:400".
  static SplitSpec parse(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw InputError("split must be prefix:<fraction> or middle:<frames>");
    const std::string kind = text.substr(0, colon);
    const std::string arg = text.substr(colon + 1);
    try {
      std::size_t used = 0;
      if (kind == "prefix") {
        const double f = std::stod(arg, &used);
        if (used != arg.size() || !(f > 0.0 && f < 1.0)) throw InputError("");
        return prefix(f);
      }
      if (kind == "middle") {
        if (arg.empty() || arg.find_first_not_of("0123456789") != std::string::npos) throw InputError("");
        const unsigned long n = std::stoul(arg, &used);
        if (n == 0) throw InputError("");
        return middle(n);
      }
    } catch (const std::exception&) {
    }
    throw InputError("bad split '" + text + "': use prefix:<fraction in (0,1)> or middle:<frames>");
  }

  std::string to_string() const {
    return kind == Kind::PrefixFraction ? "prefix:" + std::to_string(fraction)
                                        : "middle:" + std::to_string(block_len);
  }
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline SplitIndices split(std::size_t n, const SplitSpec& spec) {
  if (n == 0) throw InputError("split: empty dataset");
  std::size_t begin = 0, end = 0;  // training block [begin, end)
  if (spec.kind == SplitSpec::Kind::PrefixFraction) {
    if (!(spec.fraction > 0.0 && spec.fraction < 1.0)) throw InputError("split: fraction must be in (0,1)");
    end = static_cast<std::size_t>(std::floor(spec.fraction * static_cast<double>(n)));
  } else {
    if (spec.block_len == 0 || spec.block_len > n)
      throw InputError("split: block of " + std::to_string(spec.block_len) + " frames does not fit " +
                       std::to_string(n) + " frames");
    begin = (n - spec.block_len) / 2;
    end = begin + spec.block_len;
  }
  SplitIndices out;
  for (std::size_t i = 0; i < n; ++i) (i >= begin && i < end ? out.train : out.test).push_back(i);
  return out;
}

inline SplitIndices split(const Dataset& ds, const SplitSpec& spec) { return split(ds.size(), spec); }

// ---------------------------------------------------------------------------
// Reports

struct ReportRow {
  std::size_t frame = 0;
  std::optional<long> truth;
  long estimate = 0;
  double mean = 0.0;      // raw regression output (baseline: the count)
  double variance = 0.0;  // posterior variance (baseline: 0)
};

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  double max_abs = 0.0;
  std::size_t frames = 0;
};

struct RunReport {
  std::vector<ReportRow> rows;
};

inline Metrics evaluate(const RunReport& report) {
  Metrics m;
  double abs_sum = 0.0, sq_sum = 0.0;
  for (const ReportRow& r : report.rows) {
    if (!r.truth) continue;
    const double err = static_cast<double>(r.estimate - *r.truth);
    abs_sum += std::abs(err);
    sq_sum += err * err;
    m.max_abs = std::max(m.max_abs, std::abs(err));
    ++m.frames;
  }
  if (m.frames == 0) throw InputError("evaluate: no test frame has ground truth");
  const double n = static_cast<double>(m.frames);
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  return m;
}

// ---------------------------------------------------------------------------
// Configuration

struct ProposedConfig {
  motionseg::PatchGeometry geometry;
  std::size_t components = 2;
  long state_dim = 5;
  motionseg::EmOptions em;
  double edge_threshold = featex::kDefaultEdgeThreshold;
  gpreg::FitOptions gp;
  std::optional<gpreg::KernelParams> beta0;  // default (1, 1, d, 0.1)
};

struct BaselineConfig {
  gmmbase::CounterConfig counter;
  std::optional<std::size_t> burn_in;  // default: training split length
};

struct PipelineConfig {
  std::size_t rows = 160;
  std::size_t cols = 110;
  bool report_raw_mean = false;
  ProposedConfig proposed;
  BaselineConfig baseline;
  SynthConfig synth;
};

// Reads every recognised key; unknown keys are an error.
inline PipelineConfig pipeline_config(const Config& c) {
  PipelineConfig p;
  p.rows = c.get_size("pipeline.rows", p.rows);
  p.cols = c.get_size("pipeline.cols", p.cols);
  p.report_raw_mean = c.get_bool("pipeline.report_raw_mean", p.report_raw_mean);

  auto& g = p.proposed.geometry;
  g.patch_rows = c.get_size("motionseg.patch_rows", g.patch_rows);
  g.patch_cols = c.get_size("motionseg.patch_cols", g.patch_cols);
  g.patch_len = c.get_size("motionseg.patch_len", g.patch_len);
  g.stride_space = c.get_size("motionseg.stride_space", g.stride_space);
  g.stride_time = c.get_size("motionseg.stride_time", g.stride_time);
  p.proposed.components = c.get_size("motionseg.components", p.proposed.components);
  p.proposed.state_dim = static_cast<long>(c.get_size("motionseg.state_dim", 5));
  p.proposed.em.max_iterations = c.get_size("motionseg.max_iterations", p.proposed.em.max_iterations);
  p.proposed.em.relative_tolerance = c.get_double("motionseg.tolerance", p.proposed.em.relative_tolerance);

  p.proposed.edge_threshold = c.get_double("featex.edge_threshold", p.proposed.edge_threshold);

  auto& gp = p.proposed.gp;
  gp.max_iterations = c.get_size("gpreg.max_iterations", gp.max_iterations);
  gp.gradient_tolerance = c.get_double("gpreg.gradient_tolerance", gp.gradient_tolerance);
  gp.standardize = c.get_bool("gpreg.standardize", gp.standardize);
  if (c.has("gpreg.beta1") || c.has("gpreg.beta2") || c.has("gpreg.beta3") || c.has("gpreg.beta4")) {
    const auto d = gpreg::default_beta0(static_cast<gpreg::Index>(featex::kFeatureCount));
    p.proposed.beta0 = gpreg::KernelParams{
        c.get_double("gpreg.beta1", d.beta1), c.get_double("gpreg.beta2", d.beta2),
        c.get_double("gpreg.beta3", d.beta3), c.get_double("gpreg.beta4", d.beta4)};
  }

  auto& b = p.baseline.counter;
  b.gmm.components = c.get_size("gmmbase.components", b.gmm.components);
  b.gmm.learning_rate = c.get_double("gmmbase.learning_rate", b.gmm.learning_rate);
  b.gmm.background_fraction = c.get_double("gmmbase.background_fraction", b.gmm.background_fraction);
  b.gmm.match_radius = c.get_double("gmmbase.match_radius", b.gmm.match_radius);
  b.gmm.initial_variance = c.get_double("gmmbase.initial_variance", b.gmm.initial_variance);
  b.gmm.variance_floor = c.get_double("gmmbase.variance_floor", b.gmm.variance_floor);
  b.min_blob_area = c.get_size("gmmbase.min_blob_area", b.min_blob_area);
  b.se.size = c.get_size("gmmbase.se_size", b.se.size);
  if (c.has("gmmbase.burn_in")) p.baseline.burn_in = c.get_size("gmmbase.burn_in", 0);

  auto& s = p.synth;
  s.rows = c.get_size("synth.rows", s.rows);
  s.cols = c.get_size("synth.cols", s.cols);
  s.frames = c.get_size("synth.frames", s.frames);
  s.background_level = c.get_double("synth.background_level", s.background_level);
  s.background_texture = c.get_double("synth.background_texture", s.background_texture);
  s.background_noise = c.get_double("synth.background_noise", s.background_noise);
  s.vehicle_contrast = c.get_double("synth.vehicle_contrast", s.vehicle_contrast);
  s.vehicle_texture = c.get_double("synth.vehicle_texture", s.vehicle_texture);
  s.flicker = c.get_double("synth.flicker", s.flicker);
  s.lanes = c.get_size("synth.lanes", s.lanes);
  s.vehicle_rows = c.get_size("synth.vehicle_rows", s.vehicle_rows);
  s.vehicle_cols = c.get_size("synth.vehicle_cols", s.vehicle_cols);
  s.spawn_probability = c.get_double("synth.spawn_probability", s.spawn_probability);
  s.speed_min = c.get_double("synth.speed_min", s.speed_min);
  s.speed_max = c.get_double("synth.speed_max", s.speed_max);

  c.reject_unused();
  return p;
}

// ---------------------------------------------------------------------------
// Proposed method, stage by stage

inline std::vector<Frame> select_frames(std::span<const Frame> frames, const std::vector<std::size_t>& idx) {
  std::vector<Frame> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(frames[i]);
  return out;
}

// Fits the dynamic-texture mixture on the training frames.
inline motionseg::EmFit fit_segmenter(std::span<const Frame> train_frames, const ProposedConfig& cfg,
                                      std::uint64_t seed) {
  const motionseg::PatchGrid grid = motionseg::extract_patches(train_frames, cfg.geometry);
  motionseg::EmOptions em = cfg.em;
  em.seed = seed;
  return motionseg::em_fit_mixture(grid, cfg.components, cfg.state_dim, em);
}

inline std::vector<featex::FeatureVector> extract_all(std::span<const Frame> frames,
                                                      std::span<const MotionMask> masks,
                                                      double edge_threshold) {
  if (frames.size() != masks.size())
    throw InputError("feature extraction: " + std::to_string(frames.size()) + " frames but " +
                     std::to_string(masks.size()) + " masks");
  std::vector<featex::FeatureVector> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i)
    out.push_back(featex::extract_features(frames[i], masks[i], edge_threshold));
  return out;
}

inline gpreg::Matrix feature_matrix(std::span<const featex::FeatureVector> features,
                                    const std::vector<std::size_t>& rows) {
  gpreg::Matrix X(static_cast<gpreg::Index>(rows.size()), static_cast<gpreg::Index>(featex::kFeatureCount));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto v = features[rows[r]].values();
    for (std::size_t c = 0; c < v.size(); ++c) X(static_cast<gpreg::Index>(r), static_cast<gpreg::Index>(c)) = v[c];
  }
  return X;
}

inline gpreg::GpModel train_regressor(std::span<const featex::FeatureVector> features,
                                      const std::map<std::size_t, long>& truth,
                                      const std::vector<std::size_t>& train, const ProposedConfig& cfg) {
  gpreg::Vector f(static_cast<gpreg::Index>(train.size()));
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto it = truth.find(train[i]);
    if (it == truth.end())
      throw InputError("training frame " + std::to_string(train[i]) + " has no ground truth");
    f(static_cast<gpreg::Index>(i)) = static_cast<double>(it->second);
  }
  const gpreg::Matrix X = feature_matrix(features, train);
  const auto beta0 = cfg.beta0.value_or(gpreg::default_beta0(X.cols()));
  return gpreg::fit(X, f, beta0, cfg.gp);
}

inline RunReport predict_report(const gpreg::GpModel& model, std::span<const featex::FeatureVector> features,
                                const std::vector<std::size_t>& frames_to_report,
                                const std::map<std::size_t, long>& truth) {
  RunReport report;
  const gpreg::Matrix X = feature_matrix(features, frames_to_report);
  for (std::size_t i = 0; i < frames_to_report.size(); ++i) {
    const gpreg::Prediction p = gpreg::predict(model, X.row(static_cast<gpreg::Index>(i)).transpose());
    ReportRow row;
    row.frame = frames_to_report[i];
    if (auto it = truth.find(row.frame); it != truth.end()) row.truth = it->second;
    row.mean = p.mean;
    row.variance = p.variance;
    row.estimate = gpreg::round_count(p.mean);
    report.rows.push_back(row);
  }
  return report;
}

// Dynamic-texture segmentation, feature extraction and GP regression.
inline RunReport run_proposed(const Dataset& ds, const SplitSpec& spec, const ProposedConfig& cfg,
                              std::uint64_t seed = 0) {
  ds.validate();
  const SplitIndices parts = with_stage("split", [&] { return split(ds, spec); });
  const std::vector<Frame> train_frames = select_frames(ds.frames, parts.train);
  const motionseg::EmFit em = with_stage("segment", [&] { return fit_segmenter(train_frames, cfg, seed); });
  const std::vector<MotionMask> masks = with_stage("segment", [&] {
    return motionseg::segment_video(ds.frames, em.mixture, cfg.geometry);
  });
  const auto features = with_stage("features", [&] { return extract_all(ds.frames, masks, cfg.edge_threshold); });
  const gpreg::GpModel model =
      with_stage("train", [&] { return train_regressor(features, ds.truth, parts.train, cfg); });
  return with_stage("predict", [&] { return predict_report(model, features, parts.test, ds.truth); });
}

// ---------------------------------------------------------------------------
// Baseline

// The detector is trained on the training frames first (burn-in), then
// counts the test frames in index order.
inline RunReport run_baseline(const Dataset& ds, const SplitSpec& spec, const BaselineConfig& cfg) {
  ds.validate();
  const SplitIndices parts = with_stage("split", [&] { return split(ds, spec); });
  std::vector<std::size_t> order = parts.train;
  order.insert(order.end(), parts.test.begin(), parts.test.end());
  const std::vector<Frame> frames = select_frames(ds.frames, order);
  gmmbase::CounterConfig counter = cfg.counter;
  counter.burn_in = cfg.burn_in.value_or(parts.train.size());
  const auto counts = with_stage("baseline", [&] { return gmmbase::gmm_count(frames, counter); });
  RunReport report;
  for (const gmmbase::FrameCount& fc : counts) {
    if (std::find(parts.test.begin(), parts.test.end(), fc.frame) == parts.test.end()) continue;
    ReportRow row;
    row.frame = fc.frame;
    if (auto it = ds.truth.find(fc.frame); it != ds.truth.end()) row.truth = it->second;
    row.estimate = static_cast<long>(fc.count);
    row.mean = static_cast<double>(fc.count);
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace tfp::pipeline
