#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace fbdsde {

// Static-chunk parallel loop. Workers own disjoint index ranges and must
// write to disjoint output slices; reductions happen sequentially afterwards,
// which keeps results byte-identical for every thread count.
inline void parallel_for(int n, int n_threads, const std::function<void(int)>& body) {
  if (n <= 0) return;
  n_threads = std::max(1, std::min(n_threads, n));
  if (n_threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(n_threads);
  const int chunk = (n + n_threads - 1) / n_threads;
  for (int w = 0; w < n_threads; ++w) {
    const int lo = w * chunk;
    const int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([lo, hi, &body] {
      for (int i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace fbdsde
