#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace orbit {

// Worker count: min(hardware, ORBIT_THREADS). Always >= 1.
inline int thread_count() {
  int n = int(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("ORBIT_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1 && cap < n) n = cap;
  }
  return n;
}

// Runs fn(i) for i in [0, n). Work is claimed dynamically; fn must write only
// to per-index (or otherwise disjoint) state so results do not depend on the
// schedule or the thread count.
inline void parallel_for(long n, const std::function<void(long)>& fn) {
  const int workers = thread_count();
  if (workers == 1 || n <= 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const long i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

// Deterministic reduction: items are grouped into fixed-size chunks, chunk
// partials are produced independently (in parallel), then combined pairwise in
// index order. The summation tree depends only on n and chunk size, never on
// the thread count, so floating-point results are reproducible.
//
// Acc must be default-constructible via make(); accumulate(acc, i) folds item
// i into a chunk partial in increasing-i order; merge(a, b) folds b into a.
template <typename Acc>
Acc chunked_reduce(long n, long chunk,
                   const std::function<Acc()>& make,
                   const std::function<void(Acc&, long)>& accumulate,
                   const std::function<void(Acc&, Acc&)>& merge) {
  if (chunk < 1) chunk = 1;
  const long nchunks = (n + chunk - 1) / chunk;
  if (nchunks <= 0) return make();
  std::vector<Acc> partials;
  partials.reserve(size_t(nchunks));
  for (long c = 0; c < nchunks; ++c) partials.push_back(make());
  parallel_for(nchunks, [&](long c) {
    const long lo = c * chunk;
    const long hi = std::min(n, lo + chunk);
    for (long i = lo; i < hi; ++i) accumulate(partials[size_t(c)], i);
  });
  // Pairwise tree combine, index order.
  for (long stride = 1; stride < nchunks; stride *= 2) {
    for (long c = 0; c + stride < nchunks; c += 2 * stride) {
      merge(partials[size_t(c)], partials[size_t(c + stride)]);
    }
  }
  return std::move(partials[0]);
}

}  // namespace orbit
