#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <atomic>

namespace mesofolio::par {

namespace detail {
inline std::atomic<int> configured_threads{0};

inline int resolve_threads() {
  const int n = configured_threads.load(std::memory_order_relaxed);
  if (n > 0) return n;
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}
}  // namespace detail

/// Number of worker threads used by parallel loops. 0 means "library default"
/// (all hardware threads under OpenMP, 1 otherwise).
inline int threads() { return detail::configured_threads.load(std::memory_order_relaxed); }

/// Set the worker count. 1 forces the serial reference path; 0 restores the
/// default. Applies to all subsequent parallel loops on any thread.
inline void set_threads(int n) {
  detail::configured_threads.store(n < 0 ? 0 : n, std::memory_order_relaxed);
}

/// Runs f(i) for i in [0, n). Every iteration must be independent; results
/// are identical for any thread count, including the serial path.
template <typename F>
void parallel_for(std::ptrdiff_t n, F&& f) {
  if (n <= 0) return;
  const int nt = detail::resolve_threads();
#ifdef _OPENMP
  if (nt > 1 && n > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(nt)
    for (std::ptrdiff_t i = 0; i < n; ++i) f(i);
    return;
  }
#endif
  (void)nt;
  for (std::ptrdiff_t i = 0; i < n; ++i) f(i);
}

/// True when called from inside a parallel_for worker region.
inline bool in_parallel() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

}  // namespace mesofolio::par
