#include "evocl/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace evocl {

using ordered_json = nlohmann::ordered_json;

namespace {

namespace fs = std::filesystem;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int position_in_sorted(const std::vector<int>& sorted, int value) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), value);
  return static_cast<int>(it - sorted.begin());
}

bool has_idx_files(const fs::path& dir) {
  for (const char* base : {"train-images-idx3-ubyte", "train-images.idx3-ubyte"})
    for (const char* suffix : {"", ".gz"})
      if (fs::exists(dir / (std::string(base) + suffix))) return true;
  return false;
}

std::string resolve_data_dir(const ExperimentConfig& cfg) {
  const std::string sub = to_string(cfg.dataset);
  const fs::path root(cfg.data_dir);
  for (const fs::path& candidate : {root, root / sub}) {
    if (has_idx_files(candidate)) return candidate.string();
  }
  throw DataError("no IDX files under '" + cfg.data_dir + "' or '" + (root / sub).string() +
                  "' (expected train-images-idx3-ubyte[.gz] and friends)");
}

LayerSpec extractor_spec(const ExperimentConfig& cfg, int input_dim) {
  LayerSpec spec;
  spec.widths.push_back(input_dim);
  spec.widths.insert(spec.widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  spec.widths.push_back(cfg.latent);
  spec.hidden_activation = cfg.activation;
  return spec;
}

DenseNet fresh_head(int latent, int classes, Activation act, std::uint64_t seed) {
  LayerSpec spec;
  spec.widths = {latent, classes};
  spec.hidden_activation = act;
  return init_network(spec, seed);
}

ProgressFn make_progress(const LogFn& log, const std::string& label) {
  if (!log) return {};
  return [log, label](int step, double loss) {
    if (step % 50 != 0) return;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s step %d objective %.6f", label.c_str(), step, loss);
    log(buf);
  };
}

void log_stage(const LogFn& log, const StageRecord& rec) {
  if (!log) return;
  std::ostringstream os;
  os << "stage " << rec.stage << " cumulative accuracy " << rec.cumulative_accuracy << " (";
  for (std::size_t i = 0; i < rec.per_task_accuracy.size(); ++i)
    os << (i ? " " : "") << rec.per_task_accuracy[i];
  os << ")";
  log(os.str());
}

void run_evocl(const ExperimentConfig& cfg, const TaskStream& stream, RunResult& out,
               const LogFn& log) {
  ClState state;
  state.extractor =
      init_network(extractor_spec(cfg, static_cast<int>(stream.tasks[0].train.data->inputs.cols())),
                   cfg.seed);
  TrainConfig tcfg;
  tcfg.es = cfg.es;
  tcfg.loss = cfg.loss;
  tcfg.sgd = cfg.sgd;
  tcfg.memory_per_class = cfg.memory;
  tcfg.adapter_kind = cfg.adapter;
  tcfg.task1_es = cfg.task1_es;
  tcfg.alternating_adapter = cfg.alternating_adapter;
  tcfg.threads = cfg.threads;

  std::vector<TaskSlice> seen_tests;
  for (int t = 0; t < stream.size(); ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    train_task(state, stream.tasks[t], tcfg, cfg.seed,
               make_progress(log, "task " + std::to_string(t + 1)));
    out.seconds_per_task.push_back(seconds_since(t0));
    out.generations_per_task.push_back(t == 0 && !cfg.task1_es ? 0 : cfg.es.generations);
    seen_tests.push_back(stream.tasks[t].test);
    out.matrix.push_back(evaluate_stage(state, seen_tests));
    log_stage(log, out.matrix.back());
  }
}

void run_finetune(const ExperimentConfig& cfg, const TaskStream& stream, RunResult& out,
                  const LogFn& log) {
  ClState state;
  state.extractor =
      init_network(extractor_spec(cfg, static_cast<int>(stream.tasks[0].train.data->inputs.cols())),
                   cfg.seed);
  std::vector<TaskSlice> seen_tests;
  for (int t = 0; t < stream.size(); ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    const Task& task = stream.tasks[t];
    const std::vector<int> old_seen = state.seen_classes;
    state.seen_classes.insert(state.seen_classes.end(), task.class_set.begin(),
                              task.class_set.end());
    std::sort(state.seen_classes.begin(), state.seen_classes.end());
    DenseNet head = fresh_head(cfg.latent, static_cast<int>(state.seen_classes.size()),
                               cfg.activation, mix_seed(cfg.seed, Stream::head_init, t));
    if (state.head) {
      // keep the already-trained logits for old classes; only new columns start fresh
      auto w_new = head.weights(0);
      auto b_new = head.biases(0);
      for (int c : old_seen) {
        const int from = position_in_sorted(old_seen, c);
        const int to = position_in_sorted(state.seen_classes, c);
        w_new.col(to) = state.head->weights(0).col(from);
        b_new(to) = state.head->biases(0)(from);
      }
    }
    state.head = std::move(head);
    train_sgd_classifier(state.extractor, *state.head, task.train,
                         state.class_to_head(stream.num_classes), cfg.sgd,
                         mix_seed(cfg.seed, Stream::sgd_batch, t),
                         make_progress(log, "task " + std::to_string(t + 1)));
    state.tasks_done += 1;
    out.seconds_per_task.push_back(seconds_since(t0));
    out.generations_per_task.push_back(0);
    seen_tests.push_back(task.test);
    out.matrix.push_back(evaluate_stage(state, seen_tests));
    log_stage(log, out.matrix.back());
  }
}

void run_joint(const ExperimentConfig& cfg, const TaskStream& stream,
               std::shared_ptr<const Dataset> train, RunResult& out, const LogFn& log) {
  const auto t0 = std::chrono::steady_clock::now();
  ClState state;
  state.extractor = init_network(extractor_spec(cfg, static_cast<int>(train->inputs.cols())),
                                 cfg.seed);
  state.seen_classes = identity_class_order(stream.num_classes);
  state.head = fresh_head(cfg.latent, stream.num_classes, cfg.activation,
                          mix_seed(cfg.seed, Stream::head_init, 0));
  TaskSlice pool{train, {}};
  pool.indices.resize(train->size());
  for (int i = 0; i < static_cast<int>(pool.indices.size()); ++i) pool.indices[i] = i;
  train_sgd_classifier(state.extractor, *state.head, pool,
                       state.class_to_head(stream.num_classes), cfg.sgd,
                       mix_seed(cfg.seed, Stream::sgd_batch, 0), make_progress(log, "joint"));
  state.tasks_done = stream.size();
  std::vector<TaskSlice> tests;
  for (const Task& task : stream.tasks) tests.push_back(task.test);
  out.matrix.push_back(evaluate_stage(state, tests));
  out.seconds_per_task.push_back(seconds_since(t0));
  out.generations_per_task.push_back(0);
  log_stage(log, out.matrix.back());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::pair<std::shared_ptr<const Dataset>, std::shared_ptr<const Dataset>> load_dataset(
    const ExperimentConfig& cfg) {
  if (cfg.dataset == DatasetKind::synthetic) {
    const SyntheticConfig& s = cfg.synthetic;
    auto train = std::make_shared<Dataset>(
        make_synthetic(s.classes, s.train_per_class, s.dim, s.noise,
                       mix_seed(cfg.seed, Stream::synthetic, 0), "synthetic-train"));
    auto test = std::make_shared<Dataset>(
        make_synthetic(s.classes, s.test_per_class, s.dim, s.noise,
                       mix_seed(cfg.seed, Stream::synthetic, 1), "synthetic-test"));
    return {train, test};
  }
  const std::string dir = resolve_data_dir(cfg);
  const std::string name = to_string(cfg.dataset);
  auto train = std::make_shared<Dataset>(load_idx_dataset(dir, name, true));
  auto test = std::make_shared<Dataset>(load_idx_dataset(dir, name, false));
  return {train, test};
}

RunResult run_experiment(const ExperimentConfig& cfg, const LogFn& log) {
  cfg.validate();
  RunResult r;
  r.config = cfg;
  r.version = kVersion;
  auto [train, test] = load_dataset(cfg);
  const std::vector<int> order =
      cfg.shuffle_classes
          ? shuffled_class_order(train->num_classes, mix_seed(cfg.seed, Stream::class_order))
          : identity_class_order(train->num_classes);
  const TaskStream stream = split_tasks(train, test, cfg.tasks, order, cfg.seed);
  switch (cfg.method) {
    case Method::evocl: run_evocl(cfg, stream, r, log); break;
    case Method::finetune: run_finetune(cfg, stream, r, log); break;
    case Method::joint: run_joint(cfg, stream, train, r, log); break;
  }
  r.a_last = a_last(r.matrix);
  r.a_inc = a_inc(r.matrix);
  return r;
}

std::string results_to_json(const RunResult& r) {
  ordered_json j;
  j["version"] = r.version;
  j["config"] = ordered_json::parse(config_to_json(r.config));
  j["a_last"] = r.a_last;
  j["a_inc"] = r.a_inc;
  ordered_json matrix = ordered_json::array();
  for (const StageRecord& rec : r.matrix) {
    matrix.push_back({{"stage", rec.stage},
                      {"cumulative_accuracy", rec.cumulative_accuracy},
                      {"per_task_accuracy", rec.per_task_accuracy}});
  }
  j["matrix"] = std::move(matrix);
  j["seconds_per_task"] = r.seconds_per_task;
  j["generations_per_task"] = r.generations_per_task;
  return j.dump(2) + "\n";
}

RunResult results_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("results document is not valid JSON: ") + e.what());
  }
  RunResult r;
  try {
    j.at("version").get_to(r.version);
    r.config = config_from_json(j.at("config").dump());
    j.at("a_last").get_to(r.a_last);
    j.at("a_inc").get_to(r.a_inc);
    for (const auto& rec : j.at("matrix")) {
      StageRecord s;
      rec.at("stage").get_to(s.stage);
      rec.at("cumulative_accuracy").get_to(s.cumulative_accuracy);
      rec.at("per_task_accuracy").get_to(s.per_task_accuracy);
      r.matrix.push_back(std::move(s));
    }
    j.at("seconds_per_task").get_to(r.seconds_per_task);
    j.at("generations_per_task").get_to(r.generations_per_task);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("results document is missing fields: ") + e.what());
  }
  return r;
}

std::string matrix_to_csv(const RunResult& r) {
  std::size_t width = 0;
  for (const StageRecord& rec : r.matrix)
    width = std::max(width, rec.per_task_accuracy.size());
  std::ostringstream os;
  os << "stage,cumulative_accuracy";
  for (std::size_t i = 1; i <= width; ++i) os << ",task_" << i;
  os << "\n";
  for (const StageRecord& rec : r.matrix) {
    os << rec.stage << "," << format_double(rec.cumulative_accuracy);
    for (std::size_t i = 0; i < width; ++i) {
      os << ",";
      if (i < rec.per_task_accuracy.size()) os << format_double(rec.per_task_accuracy[i]);
    }
    os << "\n";
  }
  return os.str();
}

std::string with_extension(const std::string& path, const std::string& ext) {
  fs::path p(path);
  p.replace_extension(ext);
  return p.string();
}

void emit_results(const RunResult& r, const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write results file: " + path);
    out << results_to_json(r);
  }
  const std::string csv_path = with_extension(path, "csv");
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw DataError("cannot write results table: " + csv_path);
  csv << matrix_to_csv(r);
}

RunResult parse_results(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open results file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return results_from_json(buf.str());
}

}  // namespace evocl
