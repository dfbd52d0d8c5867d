#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace surfnn {

/// Sets the worker count for internal loops. Results never depend on it:
/// parallel loops only write per-index outputs, and reductions are done
/// sequentially afterwards.
inline void set_thread_count(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

template <typename Fn>
inline void parallel_for(std::ptrdiff_t count, Fn&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (count > 4096)
#endif
  for (std::ptrdiff_t i = 0; i < count; ++i) fn(i);
}

}  // namespace surfnn
