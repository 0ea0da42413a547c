#pragma once

#include <algorithm>
#include <cstddef>

// Dense kernels shared by the op implementations. The GEMM accumulates every
// output element over k in ascending order no matter how rows are blocked, so
// results depend only on (m, k, n) and the operand values.

namespace huvr::ad::kernels {

template <class T>
void gemm(const T* __restrict A, const T* __restrict B, T* __restrict C, std::size_t m,
          std::size_t k, std::size_t n) {
  std::fill(C, C + m * n, T(0));
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    T* c0 = C + i * n;
    T* c1 = c0 + n;
    T* c2 = c1 + n;
    T* c3 = c2 + n;
    const T* a0 = A + i * k;
    const T* a1 = a0 + k;
    const T* a2 = a1 + k;
    const T* a3 = a2 + k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* b = B + p * n;
      const T v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
      for (std::size_t j = 0; j < n; ++j) {
        const T bj = b[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    T* c = C + i * n;
    const T* a = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* b = B + p * n;
      const T v = a[p];
      for (std::size_t j = 0; j < n; ++j) c[j] += v * b[j];
    }
  }
}

/// dst[c][r] = src[r][c] for a rows x cols source.
template <class T>
void transpose2d(const T* __restrict src, T* __restrict dst, std::size_t rows, std::size_t cols) {
  constexpr std::size_t kTile = 16;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile)
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t r1 = std::min(rows, r0 + kTile), c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
    }
}

}  // namespace huvr::ad::kernels
