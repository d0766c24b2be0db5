#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fklab {

// worker count: FKLAB_THREADS caps hardware concurrency
inline unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FKLAB_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(std::min<long>(v, 1024));
    } catch (...) {
    }
  }
  return hw;
}

// Runs task(i) for i in [0,n) on a small pool. Tasks must write disjoint
// outputs; the first exception is rethrown on the caller thread.
template <class Task>
void parallel_for(std::size_t n, Task&& task, unsigned threads = 0) {
  if (threads == 0) threads = worker_count();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
        next.store(n);
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

inline constexpr std::size_t kPathBlock = 4096;

// Deterministic map-reduce over path ids. Paths are cut into fixed blocks;
// each block accumulates sequentially and blocks are merged pairwise in
// index order, so the result does not depend on the worker count.
template <class Acc, class Make, class Body, class Merge>
Acc reduce_paths(std::size_t n_paths, Make make, Body body, Merge merge, unsigned threads = 0) {
  const std::size_t n_blocks = (n_paths + kPathBlock - 1) / kPathBlock;
  if (n_blocks == 0) return make();
  std::vector<Acc> parts(n_blocks);
  parallel_for(
      n_blocks,
      [&](std::size_t b) {
        Acc acc = make();
        const std::size_t lo = b * kPathBlock, hi = std::min(n_paths, lo + kPathBlock);
        for (std::size_t p = lo; p < hi; ++p) body(acc, p);
        parts[b] = std::move(acc);
      },
      threads);
  for (std::size_t width = 1; width < n_blocks; width *= 2)
    for (std::size_t i = 0; i + width < n_blocks; i += 2 * width) merge(parts[i], parts[i + width]);
  return std::move(parts[0]);
}

// pairwise summation of a plain array
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

}  // namespace fklab
