#ifndef EVOCL_COMMON_HPP
#define EVOCL_COMMON_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace evocl {

inline constexpr const char* kVersion = "0.1.0";

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ByteMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// Error categories map onto the CLI exit codes (1/2/3).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Named sub-streams of the run seed. Every random decision in a run is keyed
// by (seed, tag, indices...) so results do not depend on call order or
// thread count.
enum class Stream : std::uint64_t {
  net_init = 1,
  perturb = 2,
  batch_new = 3,
  batch_mem = 4,
  head_init = 5,
  adapter_init = 6,
  store_features = 7,
  task_shuffle = 8,
  synthetic = 9,
  es = 10,
  sgd_batch = 11,
  class_order = 12,
  head_refit = 13,
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

inline std::uint64_t mix_seed(std::uint64_t seed) { return detail::splitmix64(seed); }

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t next, Rest... rest) {
  return mix_seed(detail::splitmix64(seed ^ detail::splitmix64(next)), rest...);
}

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t seed, Stream tag, Rest... rest) {
  return mix_seed(seed, static_cast<std::uint64_t>(tag), rest...);
}

template <typename... Args>
std::mt19937_64 make_rng(Args... args) {
  return std::mt19937_64(mix_seed(args...));
}

// First k elements of a seeded permutation of [0, n) (partial Fisher-Yates).
std::vector<int> sample_without_replacement(int n, int k, std::mt19937_64& rng);

// Runs fn(i) for i in [0, n). threads == 0 picks hardware concurrency,
// threads <= 1 stays serial. fn must be safe to call concurrently.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace evocl

#endif
