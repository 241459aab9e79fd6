#include "evlt/simd/kernels.hpp"

#include <vector>

namespace evlt::simd::detail {
namespace {

template <typename T>
void gemm_ref(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
              const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
              std::size_t ldc, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] = T(0);
  }
  // i-p-j order keeps the innermost loop contiguous in B and C.
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T aval = ta ? a[p * lda + i] : a[i * lda + p];
      if (tb) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += aval * b[j * ldb + p];
      } else {
        const T* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aval * brow[j];
      }
    }
  }
}

template <typename T>
void axpy_ref(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
template <typename T>
void add_ref(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
template <typename T>
void mul_ref(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
template <typename T>
T dot_ref(std::size_t n, const T* a, const T* b) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}
template <typename T>
T sum_ref(std::size_t n, const T* a) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}
template <typename T>
void relu_ref(std::size_t n, const T* a, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
}

}  // namespace

template <typename T>
const KernelTable<T>& scalar_table() {
  static const KernelTable<T> table{&gemm_ref<T>, &axpy_ref<T>, &add_ref<T>,
                                    &mul_ref<T>,  &dot_ref<T>,  &sum_ref<T>,
                                    &relu_ref<T>};
  return table;
}

template const KernelTable<float>& scalar_table<float>();
template const KernelTable<double>& scalar_table<double>();

}  // namespace evlt::simd::detail
