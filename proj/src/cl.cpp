#include "evocl/cl.hpp"

#include <algorithm>

namespace evocl {

void LossConfig::validate() const {
  if (alpha < 0.0) throw std::invalid_argument("loss alpha must be nonnegative");
  if (batch_new < 1 || batch_mem < 1)
    throw std::invalid_argument("loss batch sizes must be positive");
}

std::vector<int> ClState::class_to_head(int num_classes) const {
  std::vector<int> map(num_classes, -1);
  for (std::size_t i = 0; i < seen_classes.size(); ++i)
    map[seen_classes[i]] = static_cast<int>(i);
  return map;
}

Matrix extract_features(const DenseNet& extractor, const Matrix& inputs) {
  return forward(extractor, inputs);
}

void store_features(FeatureMemory& memory, const DenseNet& extractor, const TaskSlice& data,
                    const std::vector<int>& class_set, int n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("memory size per class must be positive");
  const int latent = extractor.spec.output_width();
  if (memory.entries.empty()) {
    memory.per_class = n_per_class;
    memory.latent_dim = latent;
  } else if (memory.per_class != n_per_class || memory.latent_dim != latent) {
    throw TrainError("feature memory shape changed mid-stream");
  }
  for (int c : class_set) {
    std::vector<int> positions;
    for (int i = 0; i < data.size(); ++i)
      if (data.data->labels[data.indices[i]] == c) positions.push_back(i);
    if (positions.empty())
      throw TrainError("cannot memorize class " + std::to_string(c) + ": no examples");
    auto rng = make_rng(seed, static_cast<std::uint64_t>(c));
    std::vector<int> rows(n_per_class);
    if (static_cast<int>(positions.size()) >= n_per_class) {
      auto pick = sample_without_replacement(static_cast<int>(positions.size()), n_per_class, rng);
      for (int i = 0; i < n_per_class; ++i) rows[i] = positions[pick[i]];
    } else {
      std::uniform_int_distribution<int> any(0, static_cast<int>(positions.size()) - 1);
      for (int i = 0; i < n_per_class; ++i) rows[i] = positions[any(rng)];
    }
    memory.entries[c] = forward(extractor, data.gather(rows).inputs);
  }
}

Matrix adapt_features(const DenseNet& adapter, const Matrix& latents) {
  return forward(adapter, latents);
}

DenseNet make_adapter(int latent_dim, AdapterKind kind, std::uint64_t seed, double init_noise) {
  if (latent_dim < 1) throw std::invalid_argument("adapter latent dim must be positive");
  LayerSpec spec;
  spec.hidden_activation = Activation::relu;
  if (kind == AdapterKind::linear)
    spec.widths = {latent_dim, latent_dim};
  else
    spec.widths = {latent_dim, 2 * latent_dim, latent_dim};
  DenseNet net{spec, Vector::Zero(spec.param_count())};
  if (kind == AdapterKind::linear) {
    net.weights(0) = Matrix::Identity(latent_dim, latent_dim);
  } else {
    // x == relu(x) - relu(-x), so [I -I] into the hidden layer and [I; -I]
    // out of it reproduce the input exactly
    auto w1 = net.weights(0);
    auto w2 = net.weights(1);
    for (int j = 0; j < latent_dim; ++j) {
      w1(j, j) = 1.0;
      w1(j, latent_dim + j) = -1.0;
      w2(j, j) = 1.0;
      w2(latent_dim + j, j) = -1.0;
    }
  }
  if (init_noise > 0.0) {
    auto rng = make_rng(seed, Stream::adapter_init);
    std::normal_distribution<double> noise(0.0, init_noise);
    for (int l = 0; l < spec.num_layers(); ++l) {
      auto w = net.weights(l);
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) += noise(rng);
    }
  }
  return net;
}

void remap_memory(FeatureMemory& memory, const DenseNet& adapter) {
  if (memory.entries.empty()) return;
  if (adapter.spec.input_width() != memory.latent_dim ||
      adapter.spec.output_width() != memory.latent_dim)
    throw std::invalid_argument("adapter does not map the memory's latent space onto itself");
  for (auto& [c, m] : memory.entries) m = adapt_features(adapter, m);
}

namespace {

int index_in_sorted(const std::vector<int>& sorted, int value) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), value);
  if (it == sorted.end() || *it != value) return -1;
  return static_cast<int>(it - sorted.begin());
}

std::vector<int> to_head_labels(const std::vector<int>& global, const std::vector<int>& seen) {
  std::vector<int> local(global.size());
  for (std::size_t i = 0; i < global.size(); ++i) {
    local[i] = index_in_sorted(seen, global[i]);
    if (local[i] < 0)
      throw std::invalid_argument("label " + std::to_string(global[i]) +
                                  " not covered by the current head");
  }
  return local;
}

// All three loss terms on raw parameter blocks. ad_spec == nullptr drops the
// past-task terms (first task).
double composite_terms(const LayerSpec& ext_spec, const double* ext_p,
                       const LayerSpec& head_spec, const double* head_p,
                       const LayerSpec* ad_spec, const double* ad_p, const Matrix& x_new,
                       const std::vector<int>& y_new, const Matrix* frozen_out,
                       const Matrix* mem_lat, const std::vector<int>* y_mem, double alpha) {
  Matrix latents = forward(ext_spec, ext_p, x_new);
  double loss = softmax_cross_entropy(forward(head_spec, head_p, latents), y_new);
  if (ad_spec) {
    Matrix mem_adapted = forward(*ad_spec, ad_p, *mem_lat);
    loss += softmax_cross_entropy(forward(head_spec, head_p, mem_adapted), *y_mem);
    loss += alpha * mse(forward(*ad_spec, ad_p, *frozen_out), latents);
  }
  return loss;
}

// ES objective for one task. begin_generation draws one new-data minibatch
// and one memory minibatch shared by every candidate of the generation.
class TaskObjective final : public Objective {
 public:
  TaskObjective(const ClState& state, const TaskSlice& train, const LossConfig& cfg,
                bool adapter_in_candidate, std::uint64_t run_seed, int task_index)
      : ext_spec_(state.extractor.spec),
        head_spec_(state.head->spec),
        train_(train),
        seen_(state.seen_classes),
        alpha_(cfg.alpha),
        batch_new_(cfg.batch_new),
        batch_mem_(cfg.batch_mem),
        seed_(run_seed),
        task_(task_index) {
    ext_n_ = ext_spec_.param_count();
    head_n_ = head_spec_.param_count();
    past_ = task_index > 0;
    adapter_in_candidate_ = adapter_in_candidate;
    if (past_) {
      ad_spec_ = state.adapter->spec;
      ad_n_ = ad_spec_->param_count();
      if (!adapter_in_candidate_) fixed_adapter_ = state.adapter->params;
      frozen_ = &*state.frozen_prev;
      const int total = state.memory.total_vectors();
      if (total == 0) throw TrainError("feature memory is empty after the first task");
      mem_lat_.resize(total, state.memory.latent_dim);
      mem_lab_.reserve(total);
      int row = 0;
      for (const auto& [c, m] : state.memory.entries) {
        const int local = index_in_sorted(seen_, c);
        for (Eigen::Index r = 0; r < m.rows(); ++r, ++row) {
          mem_lat_.row(row) = m.row(r);
          mem_lab_.push_back(local);
        }
      }
    }
  }

  Eigen::Index dim() const {
    return ext_n_ + head_n_ + (past_ && adapter_in_candidate_ ? ad_n_ : 0);
  }

  void begin_generation(int g) override {
    auto rng = make_rng(seed_, Stream::batch_new, static_cast<std::uint64_t>(task_),
                        static_cast<std::uint64_t>(g));
    const auto rows = sample_without_replacement(train_.size(), batch_new_, rng);
    Batch b = train_.gather(rows);
    x_new_ = std::move(b.inputs);
    y_new_ = to_head_labels(b.labels, seen_);
    if (past_) {
      frozen_out_ = forward(*frozen_, x_new_);
      const int total = static_cast<int>(mem_lat_.rows());
      if (total <= batch_mem_) {
        mem_batch_lat_ = mem_lat_;
        mem_batch_lab_ = mem_lab_;
      } else {
        auto mrng = make_rng(seed_, Stream::batch_mem, static_cast<std::uint64_t>(task_),
                             static_cast<std::uint64_t>(g));
        const auto pick = sample_without_replacement(total, batch_mem_, mrng);
        mem_batch_lat_.resize(batch_mem_, mem_lat_.cols());
        mem_batch_lab_.resize(batch_mem_);
        for (int i = 0; i < batch_mem_; ++i) {
          mem_batch_lat_.row(i) = mem_lat_.row(pick[i]);
          mem_batch_lab_[i] = mem_lab_[pick[i]];
        }
      }
    }
  }

  double operator()(const Vector& cand) const override {
    const double* p = cand.data();
    const double* head_p = p + ext_n_;
    const double* ad_p = nullptr;
    if (past_)
      ad_p = adapter_in_candidate_ ? head_p + head_n_ : fixed_adapter_.data();
    return composite_terms(ext_spec_, p, head_spec_, head_p, past_ ? &*ad_spec_ : nullptr, ad_p,
                           x_new_, y_new_, &frozen_out_, &mem_batch_lat_, &mem_batch_lab_,
                           alpha_);
  }

 private:
  LayerSpec ext_spec_, head_spec_;
  std::optional<LayerSpec> ad_spec_;
  Eigen::Index ext_n_ = 0, head_n_ = 0, ad_n_ = 0;
  bool past_ = false, adapter_in_candidate_ = false;
  Vector fixed_adapter_;
  const DenseNet* frozen_ = nullptr;
  Matrix mem_lat_;
  std::vector<int> mem_lab_;
  const TaskSlice& train_;
  std::vector<int> seen_;
  double alpha_;
  int batch_new_, batch_mem_;
  std::uint64_t seed_;
  int task_;
  // shared by all candidates of the current generation
  Matrix x_new_, frozen_out_, mem_batch_lat_;
  std::vector<int> y_new_, mem_batch_lab_;
};

}  // namespace

double combined_loss(const Vector& candidate, const ClState& state, const Batch& new_batch,
                     const Matrix& mem_latents, const std::vector<int>& mem_labels,
                     const LossConfig& cfg) {
  cfg.validate();
  if (!state.head) throw std::invalid_argument("combined_loss: state has no head yet");
  const bool past = state.tasks_done > 0;
  const Eigen::Index ext_n = state.extractor.spec.param_count();
  const Eigen::Index head_n = state.head->spec.param_count();
  Eigen::Index want = ext_n + head_n;
  if (past) {
    if (!state.frozen_prev || !state.adapter)
      throw std::invalid_argument("combined_loss: missing frozen extractor or adapter");
    if (mem_latents.rows() == 0)
      throw std::invalid_argument("combined_loss: empty memory batch after the first task");
    if (mem_latents.rows() != static_cast<Eigen::Index>(mem_labels.size()))
      throw std::invalid_argument("combined_loss: memory batch shape mismatch");
    want += state.adapter->spec.param_count();
  }
  if (candidate.size() != want)
    throw std::invalid_argument("combined_loss: candidate has " + std::to_string(candidate.size()) +
                                " parameters, expected " + std::to_string(want));
  const auto y_new = to_head_labels(new_batch.labels, state.seen_classes);
  const double* p = candidate.data();
  if (!past)
    return composite_terms(state.extractor.spec, p, state.head->spec, p + ext_n, nullptr, nullptr,
                           new_batch.inputs, y_new, nullptr, nullptr, nullptr, cfg.alpha);
  const auto y_mem = to_head_labels(mem_labels, state.seen_classes);
  const Matrix frozen_out = forward(*state.frozen_prev, new_batch.inputs);
  return composite_terms(state.extractor.spec, p, state.head->spec, p + ext_n,
                         &state.adapter->spec, p + ext_n + head_n, new_batch.inputs, y_new,
                         &frozen_out, &mem_latents, &y_mem, cfg.alpha);
}

std::vector<int> predict(const ClState& state, const Matrix& inputs) {
  if (!state.head) throw TrainError("predict called before any task was trained");
  const Matrix logits = forward(*state.head, forward(state.extractor, inputs));
  std::vector<int> out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = static_cast<int>(j);
    out[i] = state.seen_classes[best];  // ties fall to the lowest seen class
  }
  return out;
}

void train_sgd_classifier(DenseNet& extractor, DenseNet& head, const TaskSlice& data,
                          const std::vector<int>& class_to_head, const SgdConfig& cfg,
                          std::uint64_t seed, const ProgressFn& progress) {
  if (data.size() == 0) throw TrainError("sgd training on an empty slice");
  if (cfg.epochs < 0 || cfg.batch < 1 || !(cfg.lr > 0.0))
    throw std::invalid_argument("bad sgd config");
  const int steps_per_epoch = (data.size() + cfg.batch - 1) / cfg.batch;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int s = 0; s < steps_per_epoch; ++s, ++step) {
      auto rng = make_rng(seed, Stream::sgd_batch, static_cast<std::uint64_t>(step));
      const auto rows = sample_without_replacement(data.size(), cfg.batch, rng);
      Batch b = data.gather(rows);
      std::vector<int> y(b.labels.size());
      for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = class_to_head[b.labels[i]];
        if (y[i] < 0) throw TrainError("label not covered by the head during sgd");
      }
      const Matrix z = forward(extractor, b.inputs);
      if (progress && step % 50 == 0)
        progress(step, softmax_cross_entropy(forward(head, z), y));
      Matrix gz;
      const Vector gh = backward_cross_entropy(head, z, y, &gz);
      const Vector ge = backprop(extractor, b.inputs, gz);
      sgd_step(head, gh, cfg.lr);
      sgd_step(extractor, ge, cfg.lr);
    }
  }
}

namespace {

// Alternating mode: after ES has settled the extractor and head, fit the
// adapter to map frozen_prev latents onto the new latent space.
void fit_adapter_sgd(ClState& state, const TaskSlice& train, const TrainConfig& cfg,
                     std::uint64_t seed) {
  DenseNet& adapter = *state.adapter;
  const int steps_per_epoch = (train.size() + cfg.sgd.batch - 1) / cfg.sgd.batch;
  int step = 0;
  for (int epoch = 0; epoch < cfg.sgd.epochs; ++epoch) {
    for (int s = 0; s < steps_per_epoch; ++s, ++step) {
      auto rng = make_rng(seed, Stream::sgd_batch, static_cast<std::uint64_t>(step));
      const auto rows = sample_without_replacement(train.size(), cfg.sgd.batch, rng);
      Batch b = train.gather(rows);
      const Matrix from = forward(*state.frozen_prev, b.inputs);
      const Matrix target = forward(state.extractor, b.inputs);
      sgd_step(adapter, backward_mse(adapter, from, target), cfg.sgd.lr);
    }
  }
}

// Alternating mode: polish the head by gradient steps on the two
// classification terms of the composite (L_t on live latents, L-hat on the
// remapped memory), with the extractor fixed. Both terms have exact gradients
// with respect to the head, but their variation across ES candidates is tiny
// next to the extractor-driven terms, so rank shaping alone leaves the head's
// old-class boundaries underdetermined; this pass closes that gap. Expects
// memory already remapped into the current latent space, before the new
// classes are stored.
void refit_head_sgd(ClState& state, const TaskSlice& train, const TrainConfig& cfg,
                    std::uint64_t seed) {
  DenseNet& head = *state.head;
  const int total = state.memory.total_vectors();
  Matrix mem_lat(total, state.memory.latent_dim);
  std::vector<int> mem_lab;
  mem_lab.reserve(total);
  int row = 0;
  for (const auto& [c, m] : state.memory.entries) {
    const int local = index_in_sorted(state.seen_classes, c);
    for (Eigen::Index r = 0; r < m.rows(); ++r, ++row) {
      mem_lat.row(row) = m.row(r);
      mem_lab.push_back(local);
    }
  }
  const int mem_batch = std::min(total, cfg.sgd.batch);
  const int steps_per_epoch = (train.size() + cfg.sgd.batch - 1) / cfg.sgd.batch;
  int step = 0;
  for (int epoch = 0; epoch < cfg.sgd.epochs; ++epoch) {
    for (int s = 0; s < steps_per_epoch; ++s, ++step) {
      auto rng = make_rng(seed, Stream::head_refit, static_cast<std::uint64_t>(step));
      const auto rows = sample_without_replacement(train.size(), cfg.sgd.batch, rng);
      Batch b = train.gather(rows);
      const Matrix live_lat = forward(state.extractor, b.inputs);
      const auto live_y = to_head_labels(b.labels, state.seen_classes);
      const auto pick = sample_without_replacement(total, mem_batch, rng);
      Matrix mb(mem_batch, mem_lat.cols());
      std::vector<int> my(mem_batch);
      for (int i = 0; i < mem_batch; ++i) {
        mb.row(i) = mem_lat.row(pick[i]);
        my[i] = mem_lab[pick[i]];
      }
      const Vector grad = backward_cross_entropy(head, live_lat, live_y) +
                          backward_cross_entropy(head, mb, my);
      sgd_step(head, grad, cfg.sgd.lr);
    }
  }
}

}  // namespace

void train_task(ClState& state, const Task& task, const TrainConfig& cfg, std::uint64_t run_seed,
                const ProgressFn& progress) {
  cfg.loss.validate();
  if (task.train.size() == 0) throw TrainError("task has no training examples");
  if (task.class_set.empty()) throw TrainError("task has no classes");
  for (int c : task.class_set)
    if (index_in_sorted(state.seen_classes, c) >= 0)
      throw TrainError("class " + std::to_string(c) + " was already trained");

  const int t = state.tasks_done;
  const bool first = (t == 0);
  const int latent = state.latent_dim();

  if (!first) state.frozen_prev = state.extractor;  // frozen for the whole task

  state.seen_classes.insert(state.seen_classes.end(), task.class_set.begin(),
                            task.class_set.end());
  std::sort(state.seen_classes.begin(), state.seen_classes.end());
  LayerSpec head_spec;
  head_spec.widths = {latent, static_cast<int>(state.seen_classes.size())};
  head_spec.hidden_activation = state.extractor.spec.hidden_activation;
  state.head = init_network(head_spec, mix_seed(run_seed, Stream::head_init, t));

  // In alternating mode the adapter is held fixed while ES runs, so it must
  // start as the exact identity: any init noise would turn the MSE term into
  // an anchor on a spuriously warped copy of the previous extractor.
  if (!first)
    state.adapter =
        make_adapter(latent, cfg.adapter_kind, mix_seed(run_seed, Stream::adapter_init, t),
                     cfg.alternating_adapter ? 0.0 : 0.01);

  if (first && !cfg.task1_es) {
    const auto map = state.class_to_head(task.train.data->num_classes);
    train_sgd_classifier(state.extractor, *state.head, task.train, map, cfg.sgd,
                         mix_seed(run_seed, Stream::sgd_batch, t), progress);
  } else {
    const bool adapter_in_candidate = !first && !cfg.alternating_adapter;
    TaskObjective objective(state, task.train, cfg.loss, adapter_in_candidate, run_seed, t);
    Vector theta0(objective.dim());
    const Eigen::Index ext_n = state.extractor.params.size();
    const Eigen::Index head_n = state.head->params.size();
    theta0.segment(0, ext_n) = state.extractor.params;
    theta0.segment(ext_n, head_n) = state.head->params;
    if (adapter_in_candidate)
      theta0.segment(ext_n + head_n, state.adapter->params.size()) = state.adapter->params;

    EsConfig es_cfg = cfg.es;
    es_cfg.seed = mix_seed(run_seed, Stream::es, t);
    const EsState end =
        es_run(std::move(theta0), objective, es_cfg, progress ? EsCallback(progress) : EsCallback{},
               cfg.threads);

    state.extractor.params = end.theta.segment(0, ext_n);
    state.head->params = end.theta.segment(ext_n, head_n);
    if (adapter_in_candidate)
      state.adapter->params = end.theta.segment(ext_n + head_n, state.adapter->params.size());
    if (!first && cfg.alternating_adapter)
      fit_adapter_sgd(state, task.train, cfg, mix_seed(run_seed, Stream::sgd_batch, t));
  }

  if (!first) {
    remap_memory(state.memory, *state.adapter);
    if (cfg.alternating_adapter)
      refit_head_sgd(state, task.train, cfg, mix_seed(run_seed, Stream::head_refit, t));
  }
  store_features(state.memory, state.extractor, task.train, task.class_set, cfg.memory_per_class,
                 mix_seed(run_seed, Stream::store_features, t));
  state.tasks_done += 1;
}

}  // namespace evocl
