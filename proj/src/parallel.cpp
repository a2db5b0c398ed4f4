#include "kmerspace/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace kmerspace {

std::size_t thread_count() {
  static const std::size_t count = [] {
    std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("KMERSPACE_THREADS")) {
      try {
        long v = std::stol(env);
        if (v >= 1) hw = std::min(hw, static_cast<std::size_t>(v));
      } catch (const std::exception&) {
      }
    }
    return hw;
  }();
  return count;
}

void parallel_for(std::size_t n, std::size_t min_chunk, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  std::size_t workers = std::min(thread_count(), (n + std::max<std::size_t>(min_chunk, 1) - 1) /
                                                     std::max<std::size_t>(min_chunk, 1));
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    std::size_t b = w * chunk, e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(0, std::min(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace kmerspace
