#pragma once

#include <cstddef>

namespace sarc::kernels {

// C[m,n] (+)= sum_k A[m,k] * B[k,n], all row-major with explicit leading
// dimensions. Serial; callers parallelise over independent output blocks.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate);

// C[m,n] (+)= sum_k A[k,m] * B[k,n]  (A transposed).
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate);

// Dst[cols,rows] = Src[rows,cols]ᵀ.
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst);

}  // namespace sarc::kernels
