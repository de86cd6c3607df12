#include "sarc/gemm.hpp"

#include <algorithm>

namespace sarc::kernels {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* __restrict crow = c + i * ldc;
    if (!accumulate) std::fill(crow, crow + n, T(0));
    const T* arow = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* __restrict brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T(0));
  }
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * lda;
    const T* __restrict brow = b + p * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* __restrict crow = c + i * ldc;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
    const std::size_t r1 = std::min(rows, r0 + kBlock);
    for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
      const std::size_t c1 = std::min(cols, c0 + kBlock);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
      }
    }
  }
}

#define SARC_INSTANTIATE(T)                                                                    \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t,       \
                           const T*, std::size_t, T*, std::size_t, bool);                      \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t,       \
                           const T*, std::size_t, T*, std::size_t, bool);                      \
  template void transpose<T>(std::size_t, std::size_t, const T*, T*);

SARC_INSTANTIATE(float)
SARC_INSTANTIATE(double)
#undef SARC_INSTANTIATE

}  // namespace sarc::kernels
