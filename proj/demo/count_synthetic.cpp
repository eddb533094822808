// Renders a synthetic clip, runs both counters and prints their errors.
//
//   count_synthetic [seed]

#include <cstdio>
#include <cstdlib>

#include "tfp/tfp.hpp"

using namespace tfp;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
  try {
    const pipeline::Dataset ds = pipeline::synth_scene(pipeline::SynthConfig{}, seed);
    const auto spec = pipeline::SplitSpec::prefix(0.6);
    const auto proposed = pipeline::evaluate(pipeline::run_proposed(ds, spec, pipeline::ProposedConfig{}, seed));
    const auto baseline = pipeline::evaluate(pipeline::run_baseline(ds, spec, pipeline::BaselineConfig{}));
    std::printf("%-10s %8s %8s %8s\n", "method", "mae", "rmse", "max");
    std::printf("%-10s %8.3f %8.3f %8.0f\n", "dt+gp", proposed.mae, proposed.rmse, proposed.max_abs);
    std::printf("%-10s %8.3f %8.3f %8.0f\n", "gmm", baseline.mae, baseline.rmse, baseline.max_abs);
    std::printf("%zu test frames, seed %llu\n", proposed.frames, static_cast<unsigned long long>(seed));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
