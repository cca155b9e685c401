#include "evocl/es.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace evocl {

void EsConfig::validate() const {
  if (population < 2 || population % 2 != 0)
    throw std::invalid_argument("ES population must be even and >= 2");
  if (!(sigma > 0.0)) throw std::invalid_argument("ES sigma must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("ES learning rate must be positive");
  if (generations < 0) throw std::invalid_argument("ES generation count must be nonnegative");
}

std::vector<Vector> sample_perturbations(std::uint64_t seed, int generation, int population,
                                         int dim) {
  if (population < 2 || population % 2 != 0)
    throw std::invalid_argument("perturbation count must be even and >= 2");
  if (dim < 1) throw std::invalid_argument("perturbation dimension must be >= 1");
  std::vector<Vector> eps(population);
  for (int pair = 0; pair < population / 2; ++pair) {
    auto rng = make_rng(seed, Stream::perturb, static_cast<std::uint64_t>(generation),
                        static_cast<std::uint64_t>(pair));
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector e(dim);
    for (int i = 0; i < dim; ++i) e[i] = normal(rng);
    eps[2 * pair + 1] = -e;
    eps[2 * pair] = std::move(e);
  }
  return eps;
}

std::vector<double> rank_shape(const std::vector<double>& losses) {
  const int n = static_cast<int>(losses.size());
  if (n < 2) throw std::invalid_argument("rank shaping needs at least two losses");
  // Non-finite losses all count as equally worst.
  auto key = [&](int i) {
    return std::isfinite(losses[i]) ? losses[i] : std::numeric_limits<double>::infinity();
  };
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key(a) < key(b); });
  // Tied losses share the mean of their ladder weights; this keeps the update
  // exactly zero under a constant objective (antithetic pairs cancel only when
  // equal losses get equal weights).
  std::vector<double> weights(n);
  auto ladder = [n](int r) { return 0.5 - static_cast<double>(r) / (n - 1); };
  int r = 0;
  while (r < n) {
    int end = r;
    double sum = 0.0;
    while (end < n && key(order[end]) == key(order[r])) sum += ladder(end++);
    for (int i = r; i < end; ++i) weights[order[i]] = sum / (end - r);
    r = end;
  }
  return weights;
}

void es_step(EsState& state, Objective& objective, int threads) {
  state.config.validate();
  const int pop = state.config.population;
  const int dim = static_cast<int>(state.theta.size());
  const auto eps = sample_perturbations(state.config.seed, state.generation, pop, dim);

  objective.begin_generation(state.generation);

  std::vector<double> losses(pop);
  parallel_for(pop, threads, [&](int k) {
    losses[k] = objective(state.theta + state.config.sigma * eps[k]);
  });

  bool any_finite = false;
  double best = std::numeric_limits<double>::infinity();
  for (double l : losses) {
    if (std::isfinite(l)) {
      any_finite = true;
      best = std::min(best, l);
    }
  }
  if (!any_finite)
    throw TrainError("ES generation " + std::to_string(state.generation) +
                     ": every candidate loss was non-finite");

  const auto weights = rank_shape(losses);
  Vector update = Vector::Zero(dim);
  for (int k = 0; k < pop; ++k) update += weights[k] * eps[k];
  state.theta += state.config.lr / (pop * state.config.sigma) * update;
  state.generation += 1;
  state.best_loss = std::min(state.best_loss, best);
}

EsState es_run(Vector theta0, Objective& objective, const EsConfig& config,
               const EsCallback& callback, int threads) {
  config.validate();
  EsState state{std::move(theta0), 0, config};
  for (int g = 0; g < config.generations; ++g) {
    es_step(state, objective, threads);
    if (callback) callback(state.generation, objective(state.theta));
  }
  return state;
}

}  // namespace evocl
