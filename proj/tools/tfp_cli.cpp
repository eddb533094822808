// Command-line front end for the traffic counting pipeline.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "tfp/tfp.hpp"

using namespace tfp;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::string config_path;
  std::string split = "prefix:0.6";
};

pipeline::PipelineConfig load_config(const Common& c) {
  return with_stage("config", [&] {
    const Config cfg = c.config_path.empty() ? Config{} : Config::load(c.config_path);
    return pipeline::pipeline_config(cfg);
  });
}

pipeline::SplitSpec parse_split(const Common& c) {
  return with_stage("split", [&] { return pipeline::SplitSpec::parse(c.split); });
}

std::ofstream open_out(const std::string& path) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

std::map<std::size_t, long> read_truth_file(const std::string& path) {
  auto in = open_in(path);
  return csv::read_truth(in);
}

void write_report_to(const std::string& path, const pipeline::RunReport& report, bool raw_mean) {
  if (path.empty() || path == "-") {
    csv::write_report(std::cout, report, raw_mean);
    return;
  }
  auto out = open_out(path);
  csv::write_report(out, report, raw_mean);
}

pipeline::Dataset load_dataset(const std::string& frames_dir, const std::string& truth_path,
                               const pipeline::PipelineConfig& cfg) {
  pipeline::Dataset ds;
  ds.frames = with_stage("load", [&] { return pipeline::load_frames(frames_dir, cfg.rows, cfg.cols); });
  if (!truth_path.empty()) ds.truth = with_stage("load", [&] { return read_truth_file(truth_path); });
  with_stage("load", [&] { ds.validate(); });
  return ds;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  app->add_option("--config", c.config_path, "Config file with key = value lines");
  app->add_option("--split", c.split, "prefix:<fraction> or middle:<frames>")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vehicle counting from traffic video"};
  app.require_subcommand(1);
  Common common;

  std::string out_dir, frames_dir, masks_dir, out_path, truth_path, features_path, model_path, report_path;
  std::string counts_path, boxes_path;

  auto* synth = app.add_subcommand("synth", "Render a synthetic clip and its ground truth");
  add_common(synth, common);
  synth->add_option("--out", out_dir, "Output directory")->required();

  auto* segment = app.add_subcommand("segment", "Fit the dynamic texture mixture and write motion masks");
  add_common(segment, common);
  segment->add_option("--frames", frames_dir, "Directory of PGM frames")->required();
  segment->add_option("--out", out_dir, "Mask output directory")->required();

  auto* features = app.add_subcommand("features", "Extract per-frame features from frames and masks");
  add_common(features, common);
  features->add_option("--frames", frames_dir, "Directory of PGM frames")->required();
  features->add_option("--masks", masks_dir, "Directory of PGM masks")->required();
  features->add_option("--out", out_path, "Features CSV")->required();

  auto* train = app.add_subcommand("train", "Fit the GP regressor on the training split");
  add_common(train, common);
  train->add_option("--features", features_path, "Features CSV")->required();
  train->add_option("--truth", truth_path, "Truth CSV")->required();
  train->add_option("--out", model_path, "Model file")->required();

  auto* predict = app.add_subcommand("predict", "Predict counts for the test split");
  add_common(predict, common);
  predict->add_option("--features", features_path, "Features CSV")->required();
  predict->add_option("--model", model_path, "Model file")->required();
  predict->add_option("--truth", truth_path, "Truth CSV");
  predict->add_option("--out", report_path, "Report CSV (default stdout)");

  auto* baseline = app.add_subcommand("baseline", "Count vehicles with the per-pixel GMM detector");
  add_common(baseline, common);
  baseline->add_option("--frames", frames_dir, "Directory of PGM frames")->required();
  baseline->add_option("--truth", truth_path, "Truth CSV");
  baseline->add_option("--out", report_path, "Report CSV for the test split (default stdout)");
  baseline->add_option("--counts", counts_path, "Per-frame counts CSV in processing order");
  baseline->add_option("--boxes", boxes_path, "Per-blob bounding boxes CSV");

  auto* eval = app.add_subcommand("eval", "Compute error metrics from a report");
  add_common(eval, common);
  eval->add_option("--report", report_path, "Report CSV")->required();
  eval->add_option("--out", out_path, "Metrics CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    const pipeline::PipelineConfig cfg = load_config(common);
    const pipeline::SplitSpec spec = parse_split(common);

    if (synth->parsed()) {
      const pipeline::Dataset ds = with_stage("synth", [&] { return pipeline::synth_scene(cfg.synth, common.seed); });
      with_stage("synth", [&] {
        pipeline::save_frames(fs::path(out_dir) / "frames", ds.frames);
        auto out = open_out((fs::path(out_dir) / "truth.csv").string());
        csv::write_truth(out, ds.truth);
      });
    } else if (segment->parsed()) {
      const pipeline::Dataset ds = load_dataset(frames_dir, "", cfg);
      const auto parts = with_stage("split", [&] { return pipeline::split(ds, spec); });
      const auto train_frames = pipeline::select_frames(ds.frames, parts.train);
      const auto em = with_stage("segment", [&] {
        return pipeline::fit_segmenter(train_frames, cfg.proposed, common.seed);
      });
      const auto masks = with_stage("segment", [&] {
        return motionseg::segment_video(ds.frames, em.mixture, cfg.proposed.geometry);
      });
      with_stage("segment", [&] { pipeline::save_masks(out_dir, masks); });
    } else if (features->parsed()) {
      const pipeline::Dataset ds = load_dataset(frames_dir, "", cfg);
      const auto masks = with_stage("features", [&] { return pipeline::load_masks(masks_dir); });
      const auto fv = with_stage("features", [&] {
        return pipeline::extract_all(ds.frames, masks, cfg.proposed.edge_threshold);
      });
      with_stage("features", [&] {
        std::vector<std::size_t> frames;
        for (const Frame& f : ds.frames) frames.push_back(f.index);
        auto out = open_out(out_path);
        csv::write_features(out, fv, frames);
      });
    } else if (train->parsed()) {
      const auto table = with_stage("train", [&] {
        auto in = open_in(features_path);
        return csv::read_features(in);
      });
      const auto truth = with_stage("train", [&] { return read_truth_file(truth_path); });
      const auto model = with_stage("train", [&] {
        const auto parts = pipeline::split(table.features.size(), spec);
        return pipeline::train_regressor(table.features, truth, parts.train, cfg.proposed);
      });
      with_stage("train", [&] {
        auto out = open_out(model_path);
        gpreg::save_model(model, out);
      });
    } else if (predict->parsed()) {
      const auto table = with_stage("predict", [&] {
        auto in = open_in(features_path);
        return csv::read_features(in);
      });
      const auto model = with_stage("predict", [&] {
        auto in = open_in(model_path);
        return gpreg::load_model(in);
      });
      const auto truth = truth_path.empty() ? std::map<std::size_t, long>{}
                                            : with_stage("predict", [&] { return read_truth_file(truth_path); });
      const auto report = with_stage("predict", [&] {
        const auto parts = pipeline::split(table.features.size(), spec);
        return pipeline::predict_report(model, table.features, parts.test, truth);
      });
      with_stage("predict", [&] { write_report_to(report_path, report, cfg.report_raw_mean); });
    } else if (baseline->parsed()) {
      const pipeline::Dataset ds = load_dataset(frames_dir, truth_path, cfg);
      const auto report = pipeline::run_baseline(ds, spec, cfg.baseline);
      with_stage("baseline", [&] {
        write_report_to(report_path, report, false);
        if (!counts_path.empty() || !boxes_path.empty()) {
          const auto parts = pipeline::split(ds, spec);
          std::vector<std::size_t> order = parts.train;
          order.insert(order.end(), parts.test.begin(), parts.test.end());
          gmmbase::CounterConfig counter = cfg.baseline.counter;
          counter.burn_in = cfg.baseline.burn_in.value_or(parts.train.size());
          const auto counts = gmmbase::gmm_count(pipeline::select_frames(ds.frames, order), counter);
          if (!counts_path.empty()) {
            auto out = open_out(counts_path);
            csv::write_counts(out, counts);
          }
          if (!boxes_path.empty()) {
            auto out = open_out(boxes_path);
            csv::write_boxes(out, counts);
          }
        }
      });
    } else if (eval->parsed()) {
      const auto metrics = with_stage("eval", [&] {
        auto in = open_in(report_path);
        return pipeline::evaluate(csv::read_report(in));
      });
      with_stage("eval", [&] {
        if (out_path.empty() || out_path == "-") {
          csv::write_metrics(std::cout, metrics);
        } else {
          auto out = open_out(out_path);
          csv::write_metrics(out, metrics);
        }
      });
    }
  } catch (const StageError& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
