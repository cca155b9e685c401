#include "evocl/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace evocl {

using ordered_json = nlohmann::ordered_json;

ExperimentConfig::ExperimentConfig() {
  es.population = 512;
  es.lr = 0.003;
  es.generations = 250;
  loss.alpha = 20.0;
  memory = 200;
  alternating_adapter = true;
}

namespace {

int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

void check_keys(const ordered_json& obj, const std::vector<std::string>& known,
                const std::string& section) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) != known.end()) continue;
    std::string best;
    int best_d = 1 << 30;
    for (const auto& k : known) {
      const int d = edit_distance(it.key(), k);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    std::string msg = "unknown config key '" + section + it.key() + "'";
    if (best_d <= 3) msg += "; did you mean '" + section + best + "'?";
    throw ConfigError(msg);
  }
}

template <typename T>
void read_if(const ordered_json& obj, const char* key, T& out) {
  if (obj.contains(key)) obj.at(key).get_to(out);
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "' (expected relu or tanh)");
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

AdapterKind adapter_from_string(const std::string& s) {
  if (s == "mlp") return AdapterKind::mlp;
  if (s == "linear") return AdapterKind::linear;
  throw ConfigError("unknown adapter kind '" + s + "' (expected mlp or linear)");
}

std::string to_string(AdapterKind k) { return k == AdapterKind::mlp ? "mlp" : "linear"; }

void apply_json(ExperimentConfig& cfg, const ordered_json& j) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  check_keys(j, {"dataset", "data_dir", "method", "tasks", "seed", "threads", "output", "net",
                 "es", "loss", "sgd", "memory", "adapter", "task1_es", "alternating_adapter",
                 "shuffle_classes", "synthetic"},
             "");
  if (j.contains("dataset")) {
    cfg.dataset = dataset_from_string(j.at("dataset").get<std::string>());
    cfg.dataset_set = true;
  }
  read_if(j, "data_dir", cfg.data_dir);
  if (j.contains("method")) cfg.method = method_from_string(j.at("method").get<std::string>());
  read_if(j, "tasks", cfg.tasks);
  read_if(j, "seed", cfg.seed);
  read_if(j, "threads", cfg.threads);
  read_if(j, "output", cfg.output);
  if (j.contains("net")) {
    const auto& n = j.at("net");
    check_keys(n, {"hidden", "latent", "activation"}, "net.");
    read_if(n, "hidden", cfg.hidden);
    read_if(n, "latent", cfg.latent);
    if (n.contains("activation"))
      cfg.activation = activation_from_string(n.at("activation").get<std::string>());
  }
  if (j.contains("es")) {
    const auto& e = j.at("es");
    check_keys(e, {"population", "sigma", "lr", "generations"}, "es.");
    read_if(e, "population", cfg.es.population);
    read_if(e, "sigma", cfg.es.sigma);
    read_if(e, "lr", cfg.es.lr);
    read_if(e, "generations", cfg.es.generations);
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    check_keys(l, {"alpha", "batch_new", "batch_mem"}, "loss.");
    read_if(l, "alpha", cfg.loss.alpha);
    read_if(l, "batch_new", cfg.loss.batch_new);
    read_if(l, "batch_mem", cfg.loss.batch_mem);
  }
  if (j.contains("sgd")) {
    const auto& s = j.at("sgd");
    check_keys(s, {"lr", "epochs", "batch"}, "sgd.");
    read_if(s, "lr", cfg.sgd.lr);
    read_if(s, "epochs", cfg.sgd.epochs);
    read_if(s, "batch", cfg.sgd.batch);
  }
  read_if(j, "memory", cfg.memory);
  if (j.contains("adapter")) cfg.adapter = adapter_from_string(j.at("adapter").get<std::string>());
  read_if(j, "task1_es", cfg.task1_es);
  read_if(j, "alternating_adapter", cfg.alternating_adapter);
  read_if(j, "shuffle_classes", cfg.shuffle_classes);
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    check_keys(s, {"classes", "dim", "train_per_class", "test_per_class", "noise"}, "synthetic.");
    read_if(s, "classes", cfg.synthetic.classes);
    read_if(s, "dim", cfg.synthetic.dim);
    read_if(s, "train_per_class", cfg.synthetic.train_per_class);
    read_if(s, "test_per_class", cfg.synthetic.test_per_class);
    read_if(s, "noise", cfg.synthetic.noise);
  }
}

ordered_json config_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["dataset"] = to_string(cfg.dataset);
  j["data_dir"] = cfg.data_dir;
  j["method"] = to_string(cfg.method);
  j["tasks"] = cfg.tasks;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["output"] = cfg.output;
  j["net"] = {{"hidden", cfg.hidden}, {"latent", cfg.latent}, {"activation", to_string(cfg.activation)}};
  j["es"] = {{"population", cfg.es.population},
             {"sigma", cfg.es.sigma},
             {"lr", cfg.es.lr},
             {"generations", cfg.es.generations}};
  j["loss"] = {{"alpha", cfg.loss.alpha},
               {"batch_new", cfg.loss.batch_new},
               {"batch_mem", cfg.loss.batch_mem}};
  j["sgd"] = {{"lr", cfg.sgd.lr}, {"epochs", cfg.sgd.epochs}, {"batch", cfg.sgd.batch}};
  j["memory"] = cfg.memory;
  j["adapter"] = to_string(cfg.adapter);
  j["task1_es"] = cfg.task1_es;
  j["alternating_adapter"] = cfg.alternating_adapter;
  j["shuffle_classes"] = cfg.shuffle_classes;
  j["synthetic"] = {{"classes", cfg.synthetic.classes},
                    {"dim", cfg.synthetic.dim},
                    {"train_per_class", cfg.synthetic.train_per_class},
                    {"test_per_class", cfg.synthetic.test_per_class},
                    {"noise", cfg.synthetic.noise}};
  return j;
}

}  // namespace

std::string to_string(DatasetKind d) {
  switch (d) {
    case DatasetKind::mnist: return "mnist";
    case DatasetKind::fashion_mnist: return "fashion_mnist";
    default: return "synthetic";
  }
}

std::string to_string(Method m) {
  switch (m) {
    case Method::evocl: return "evocl";
    case Method::finetune: return "finetune";
    default: return "joint";
  }
}

DatasetKind dataset_from_string(const std::string& s) {
  if (s == "mnist") return DatasetKind::mnist;
  if (s == "fashion_mnist") return DatasetKind::fashion_mnist;
  if (s == "synthetic") return DatasetKind::synthetic;
  throw ConfigError("unknown dataset '" + s + "' (expected mnist, fashion_mnist, or synthetic)");
}

Method method_from_string(const std::string& s) {
  if (s == "evocl") return Method::evocl;
  if (s == "finetune") return Method::finetune;
  if (s == "joint") return Method::joint;
  throw ConfigError("unknown method '" + s + "' (expected evocl, finetune, or joint)");
}

void ExperimentConfig::validate() const {
  if (!dataset_set) throw ConfigError("dataset is required (mnist, fashion_mnist, or synthetic)");
  if (dataset != DatasetKind::synthetic && data_dir.empty())
    throw ConfigError("data_dir is required for file-backed datasets "
                      "(flag --data-dir, config key data_dir, or EVOCL_DATA_DIR)");
  const int num_classes =
      dataset == DatasetKind::synthetic ? synthetic.classes : 10;
  if (tasks < 1) throw ConfigError("tasks must be positive");
  if (tasks > num_classes)
    throw ConfigError("tasks (" + std::to_string(tasks) + ") exceeds the class count (" +
                      std::to_string(num_classes) + ")");
  if (threads < 0) throw ConfigError("threads must be >= 0 (0 = all cores)");
  if (latent < 1) throw ConfigError("net.latent must be positive");
  for (int h : hidden)
    if (h < 1) throw ConfigError("net.hidden widths must be positive");
  if (memory < 1) throw ConfigError("memory must be positive");
  try {
    es.validate();
    loss.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(sgd.lr > 0.0)) throw ConfigError("sgd.lr must be positive");
  if (sgd.epochs < 1) throw ConfigError("sgd.epochs must be positive");
  if (sgd.batch < 1) throw ConfigError("sgd.batch must be positive");
  if (dataset == DatasetKind::synthetic) {
    if (synthetic.classes < 2) throw ConfigError("synthetic.classes must be at least 2");
    if (synthetic.dim < synthetic.classes)
      throw ConfigError("synthetic.dim must be >= synthetic.classes");
    if (synthetic.train_per_class < 1 || synthetic.test_per_class < 1)
      throw ConfigError("synthetic per-class example counts must be positive");
    if (synthetic.noise < 0.0) throw ConfigError("synthetic.noise must be nonnegative");
  }
}

void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  try {
    apply_json(cfg, j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

std::string config_to_json(const ExperimentConfig& cfg) { return config_json(cfg).dump(2); }

ExperimentConfig config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config echo is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    apply_json(cfg, j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config echo: ") + e.what());
  }
  return cfg;
}

}  // namespace evocl
