#include "evocl/common.hpp"

#include <functional>
#include <thread>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
namespace {
// Candidate evaluation allocates many short-lived batch-sized matrices that
// sit above glibc's default mmap threshold; without this, most of the run is
// spent in mmap/munmap.
const bool malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 64 << 20);
  return true;
}();
}  // namespace
#endif

namespace evocl {

std::vector<int> sample_without_replacement(int n, int k, std::mt19937_64& rng) {
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  if (k > n) k = n;
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads == 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  if (threads > n) threads = n;
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    workers.emplace_back([=, &fn] {
      // static partition keeps the work assignment deterministic
      for (int i = w; i < n; i += threads) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace evocl
