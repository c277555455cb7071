#pragma once

#include <cblas.h>

#include <algorithm>
#include <cstddef>
#include <type_traits>
#include <vector>

namespace crackseg::blas {

namespace detail {

// Packs op(A) into a dense row-major rows x cols buffer.
template <typename T>
void pack(bool trans, int rows, int cols, const T* a, int ld, std::vector<T>& out) {
  out.resize(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<std::size_t>(r) * cols + c] =
          trans ? a[static_cast<std::size_t>(c) * ld + r] : a[static_cast<std::size_t>(r) * ld + c];
}

// Plain i-k-j product on packed operands.
template <typename T>
void gemm_reference(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
                    int ldb, T beta, T* c, int ldc) {
  std::vector<T> pa, pb, row(static_cast<std::size_t>(n));
  pack(trans_a, m, k, a, lda, pa);
  pack(trans_b, k, n, b, ldb, pb);
  for (int i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), T{0});
    for (int l = 0; l < k; ++l) {
      const T s = pa[static_cast<std::size_t>(i) * k + l];
      const T* br = pb.data() + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) row[j] += s * br[j];
    }
    T* cr = c + static_cast<std::size_t>(i) * ldc;
    for (int j = 0; j < n; ++j) cr[j] = alpha * row[j] + (beta == T{0} ? T{0} : beta * cr[j]);
  }
}

}  // namespace detail

// Row-major C = alpha * op(A) * op(B) + beta * C, with op(A) of size M x K and
// op(B) of size K x N. Float goes to OpenBLAS. Double is only used for
// gradient verification and takes the reference loop: the AVX-512 dgemm
// kernels of OpenBLAS 0.3.20 return wrong results for some shapes.
template <typename T>
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
                 int ldb, T beta, T* c, int ldc) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>, "gemm supports float and double");
  if constexpr (std::is_same_v<T, float>) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k,
                alpha, a, lda, b, ldb, beta, c, ldc);
  } else {
    detail::gemm_reference(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
}

// Contiguous-matrix convenience overload.
template <typename T>
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c, T beta = T{0}) {
  gemm<T>(trans_a, trans_b, m, n, k, T{1}, a, trans_a ? m : k, b, trans_b ? k : n, beta, c, n);
}

}  // namespace crackseg::blas
