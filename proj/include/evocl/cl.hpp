#ifndef EVOCL_CL_HPP
#define EVOCL_CL_HPP

#include <map>
#include <optional>

#include "evocl/data.hpp"
#include "evocl/es.hpp"
#include "evocl/net.hpp"

namespace evocl {

// Per-class latent replay store. Vectors always live in the latent space of
// the most recently finalized extractor; remap_memory maintains that when a
// new extractor is adopted.
struct FeatureMemory {
  int per_class = 0;   // N vectors kept per class
  int latent_dim = 0;  // S
  std::map<int, Matrix> entries;  // class id -> per_class x latent_dim

  int total_vectors() const {
    int n = 0;
    for (const auto& [c, m] : entries) n += static_cast<int>(m.rows());
    return n;
  }
};

struct LossConfig {
  double alpha = 1.0;  // weight of the adapter reconstruction term
  int batch_new = 128;
  int batch_mem = 128;

  void validate() const;
};

struct SgdConfig {
  double lr = 0.1;
  int epochs = 10;
  int batch = 128;
};

enum class AdapterKind { mlp, linear };

struct TrainConfig {
  EsConfig es;    // per-task budget; seed field is ignored (derived from the run seed)
  LossConfig loss;
  SgdConfig sgd;  // used for the first task and by gradient baselines
  int memory_per_class = 20;
  AdapterKind adapter_kind = AdapterKind::mlp;
  bool task1_es = false;           // train the first task with ES instead of backprop
  bool alternating_adapter = false;  // fit adapter by gradient steps on the MSE term
  int threads = 1;
};

// Everything the continual learner carries between tasks. The head covers
// exactly the classes seen so far (kept sorted, so prediction ties resolve
// toward the lowest class id). frozen_prev and adapter exist from task 2 on.
struct ClState {
  DenseNet extractor;
  std::optional<DenseNet> head;
  std::optional<DenseNet> frozen_prev;
  std::optional<DenseNet> adapter;
  FeatureMemory memory;
  std::vector<int> seen_classes;
  int tasks_done = 0;

  int latent_dim() const { return extractor.spec.output_width(); }
  // position of each global class in the head's output, -1 if unseen
  std::vector<int> class_to_head(int num_classes) const;
};

Matrix extract_features(const DenseNet& extractor, const Matrix& inputs);

// Picks N examples per new class (without replacement when possible, with
// replacement otherwise), runs them through the extractor and stores the
// latents. A class with zero examples is an error.
void store_features(FeatureMemory& memory, const DenseNet& extractor, const TaskSlice& data,
                    const std::vector<int>& class_set, int n_per_class, std::uint64_t seed);

Matrix adapt_features(const DenseNet& adapter, const Matrix& latents);

// Near-identity adapter over the latent space: either a linear map started
// at I + noise, or a one-hidden-layer relu MLP of width 2S whose weights
// embed the identity (x = relu(x) - relu(-x)) plus noise.
DenseNet make_adapter(int latent_dim, AdapterKind kind, std::uint64_t seed,
                      double init_noise = 0.01);

// Replaces every stored vector by adapter(vector); counts and keys unchanged.
void remap_memory(FeatureMemory& memory, const DenseNet& adapter);

// The scalar the ES optimizer sees. candidate is [extractor | head | adapter]
// params in that order (adapter absent before task 2). For the first task the
// value is the plain new-task cross-entropy; afterwards it is
//   L_new + L_memory + alpha * L_reconstruction
// where L_memory scores the head on adapter-transformed stored latents and
// L_reconstruction is the MSE between adapter(frozen_prev(x)) and
// extractor(x) on new-task inputs.
double combined_loss(const Vector& candidate, const ClState& state, const Batch& new_batch,
                     const Matrix& mem_latents, const std::vector<int>& mem_labels,
                     const LossConfig& cfg);

// Task-agnostic prediction over every class seen so far; returns global ids.
std::vector<int> predict(const ClState& state, const Matrix& inputs);

using ProgressFn = std::function<void(int step, double loss)>;

// One pass of the per-task protocol: snapshot the previous extractor,
// reinitialize the head over the grown class set, set up the adapter, run the
// configured optimizer, then bring the feature memory up to date.
void train_task(ClState& state, const Task& task, const TrainConfig& cfg, std::uint64_t run_seed,
                const ProgressFn& progress = {});

// Plain minibatch-SGD training of head(extractor(x)) with cross-entropy;
// shared by the first-task path and the gradient baselines.
void train_sgd_classifier(DenseNet& extractor, DenseNet& head, const TaskSlice& data,
                          const std::vector<int>& class_to_head, const SgdConfig& cfg,
                          std::uint64_t seed, const ProgressFn& progress = {});

}  // namespace evocl

#endif
