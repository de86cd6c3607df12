#pragma once

#include <cstddef>
#include <cstdint>

namespace sarc {

// Worker count used by the numeric kernels. Kernels partition work so that
// each output element is produced by exactly one worker in a fixed order,
// which keeps results bitwise identical for any thread count.
void set_num_threads(int n);
int num_threads();

template <typename Fn>
void parallel_for(std::int64_t begin, std::int64_t end, Fn&& fn) {
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (end - begin > 1)
  for (std::int64_t i = begin; i < end; ++i) {
    fn(i);
  }
}

}  // namespace sarc
