#ifndef EVOCL_ES_HPP
#define EVOCL_ES_HPP

#include <functional>
#include <limits>
#include <vector>

#include "evocl/common.hpp"

namespace evocl {

// Isotropic-Gaussian evolution strategy with antithetic sampling and
// rank-based fitness shaping. Minimizes; lower loss is better.
struct EsConfig {
  int population = 64;  // must be even, perturbations come in +/- pairs
  double sigma = 0.02;
  double lr = 0.01;
  int generations = 2000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EsState {
  Vector theta;
  int generation = 0;
  EsConfig config;
  double best_loss = std::numeric_limits<double>::infinity();
};

// Black-box minimization target. operator() must be const and safe to call
// from several threads at once. begin_generation runs serially before the
// generation's evaluations; objectives that draw per-generation minibatches
// (common random numbers) do it there.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual double operator()(const Vector& theta) const = 0;
  virtual void begin_generation(int /*generation*/) {}
};

class FunctionObjective final : public Objective {
 public:
  explicit FunctionObjective(std::function<double(const Vector&)> fn) : fn_(std::move(fn)) {}
  double operator()(const Vector& theta) const override { return fn_(theta); }

 private:
  std::function<double(const Vector&)> fn_;
};

// population vectors: lambda/2 standard-normal draws, each followed by its
// exact negation. Pure function of (seed, generation, pair index), so any
// evaluation order or thread count sees identical perturbations.
std::vector<Vector> sample_perturbations(std::uint64_t seed, int generation, int population,
                                         int dim);

// Ascending-loss rank r (0 = best) maps to weight 0.5 - r/(n-1); tied losses
// share the mean of their ladder weights (so a constant objective moves
// nothing). Weights sum to zero, which makes the update invariant to positive
// affine transforms of the losses.
std::vector<double> rank_shape(const std::vector<double>& losses);

// One generation: evaluate theta + sigma*eps_k for all perturbations, then
// theta += lr/(population*sigma) * sum_k w_k eps_k, accumulated in candidate
// index order. Non-finite candidate losses rank worst; if every candidate is
// non-finite the step throws TrainError.
void es_step(EsState& state, Objective& objective, int threads = 1);

using EsCallback = std::function<void(int generation, double loss_at_theta)>;

EsState es_run(Vector theta0, Objective& objective, const EsConfig& config,
               const EsCallback& callback = {}, int threads = 1);

}  // namespace evocl

#endif
