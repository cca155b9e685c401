#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "evocl/runner.hpp"

namespace {

std::string indexed_output(const std::string& path, std::uint64_t seed) {
  std::filesystem::path p(path);
  const std::string ext = p.extension().string();
  p.replace_extension();
  return p.string() + "-seed" + std::to_string(seed) + ext;
}

void print_summary(const evocl::RunResult& r) {
  std::cout << "dataset=" << evocl::to_string(r.config.dataset)
            << " method=" << evocl::to_string(r.config.method) << " tasks=" << r.config.tasks
            << " seed=" << r.config.seed << "\n";
  for (const evocl::StageRecord& rec : r.matrix) {
    std::cout << "  stage " << rec.stage << ": cumulative " << rec.cumulative_accuracy
              << " | per-task";
    for (double a : rec.per_task_accuracy) std::cout << " " << a;
    std::cout << "\n";
  }
  std::cout << "  a_last=" << r.a_last << " a_inc=" << r.a_inc << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evocl: evolution-strategy class-incremental learning benchmark"};
  app.set_version_flag("--version", evocl::kVersion);
  app.require_subcommand(1);

  CLI::App* run = app.add_subcommand("run", "run one experiment");
  std::string config_path, dataset, method, out, data_dir;
  int tasks = 0, repeat = 1, threads = 0;
  std::uint64_t seed = 0;
  run->add_option("--config", config_path, "JSON config file");
  run->add_option("--dataset", dataset, "mnist | fashion_mnist | synthetic");
  run->add_option("--method", method, "evocl | finetune | joint");
  run->add_option("--tasks", tasks, "number of class-disjoint tasks");
  run->add_option("--seed", seed, "run seed");
  run->add_option("--repeat", repeat, "run this many consecutive seeds and aggregate");
  run->add_option("--out", out, "results file (JSON; a CSV lands next to it)");
  run->add_option("--threads", threads, "ES worker threads (0 = all cores)");
  run->add_option("--data-dir", data_dir, "dataset directory (or set EVOCL_DATA_DIR)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    evocl::ExperimentConfig cfg;
    evocl::load_config_file(cfg, config_path);
    if (run->count("--dataset")) {
      cfg.dataset = evocl::dataset_from_string(dataset);
      cfg.dataset_set = true;
    }
    if (run->count("--method")) cfg.method = evocl::method_from_string(method);
    if (run->count("--tasks")) cfg.tasks = tasks;
    if (run->count("--seed")) cfg.seed = seed;
    if (run->count("--threads")) cfg.threads = threads;
    if (run->count("--out")) cfg.output = out;
    if (run->count("--data-dir")) {
      cfg.data_dir = data_dir;
    } else if (cfg.data_dir.empty()) {
      if (const char* env = std::getenv("EVOCL_DATA_DIR")) cfg.data_dir = env;
    }
    if (repeat < 1) throw evocl::ConfigError("--repeat must be at least 1");

    const evocl::LogFn log = [](const std::string& line) { std::cerr << line << std::endl; };
    std::vector<double> lasts, incs;
    for (int i = 0; i < repeat; ++i) {
      evocl::ExperimentConfig c = cfg;
      c.seed = cfg.seed + static_cast<std::uint64_t>(i);
      if (repeat > 1 && !cfg.output.empty()) c.output = indexed_output(cfg.output, c.seed);
      const evocl::RunResult r = evocl::run_experiment(c, log);
      print_summary(r);
      if (!c.output.empty()) {
        evocl::emit_results(r, c.output);
        std::cout << "  wrote " << c.output << " and " << evocl::with_extension(c.output, "csv")
                  << "\n";
      }
      lasts.push_back(r.a_last);
      incs.push_back(r.a_inc);
    }
    if (repeat > 1) {
      auto mean_std = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= v.size();
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        return std::pair<double, double>(mean, std::sqrt(var / v.size()));
      };
      const auto [lm, ls] = mean_std(lasts);
      const auto [im, is] = mean_std(incs);
      std::cout << "aggregate over " << repeat << " seeds: a_last " << lm << " +/- " << ls
                << ", a_inc " << im << " +/- " << is << "\n";
    }
    return 0;
  } catch (const evocl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const evocl::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const evocl::TrainError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
