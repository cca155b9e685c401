#pragma once

#include <functional>
#include <string>

#include "evocl/config.hpp"
#include "evocl/data.hpp"
#include "evocl/eval.hpp"

namespace evocl {

struct RunResult {
  ExperimentConfig config;  // fully resolved echo
  AccuracyMatrix matrix;
  double a_last = 0.0;
  double a_inc = 0.0;
  std::vector<double> seconds_per_task;   // wall clock, not compared for equality
  std::vector<int> generations_per_task;  // 0 for gradient-trained stages
  std::string version;
};

// Progress sink; gets one short line at a time. Defaults to silent.
using LogFn = std::function<void(const std::string&)>;

// Loads the dataset named by cfg (file-backed sets come from cfg.data_dir,
// accepting either the file directory itself or a parent holding a
// mnist/fashion_mnist subdirectory).
std::pair<std::shared_ptr<const Dataset>, std::shared_ptr<const Dataset>> load_dataset(
    const ExperimentConfig& cfg);

// Runs one experiment end to end: build task stream, train by cfg.method,
// evaluate after each stage.
RunResult run_experiment(const ExperimentConfig& cfg, const LogFn& log = {});

// JSON document with every non-timing field reproducible from (config, seed).
std::string results_to_json(const RunResult& r);
RunResult results_from_json(const std::string& text);

// One CSV row per stage: stage, cumulative, then per-task accuracy columns.
std::string matrix_to_csv(const RunResult& r);

// Writes results_to_json at `path` and the CSV next to it (extension .csv).
void emit_results(const RunResult& r, const std::string& path);
RunResult parse_results(const std::string& path);

// Replaces (or appends) the filename extension.
std::string with_extension(const std::string& path, const std::string& ext);

}  // namespace evocl
