// Compiled with -mavx2 -mfma; only entered after a CPUID check.

#include <immintrin.h>

#include <algorithm>
#include <cstring>
#include <vector>

#include "evlt/simd/kernels.hpp"

namespace evlt::simd::detail {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using reg = __m256;
  static constexpr int width = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg set1(float v) { return _mm256_set1_ps(v); }
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
  static reg max(reg a, reg b) { return _mm256_max_ps(a, b); }
  static float hsum(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <>
struct Vec<double> {
  using reg = __m256d;
  static constexpr int width = 4;
  static reg zero() { return _mm256_setzero_pd(); }
  static reg set1(double v) { return _mm256_set1_pd(v); }
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
  static reg max(reg a, reg b) { return _mm256_max_pd(a, b); }
  static double hsum(reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

constexpr int kRowsPerTile = 6;

// R x (2 * width) register tile. `ap` rows are `lda` apart, `bp` is a packed
// panel with 2 * width values per k step.
template <typename T, int R>
void micro_tile(std::size_t k, const T* ap, std::size_t lda, const T* bp,
                T* tile) {
  using V = Vec<T>;
  constexpr int W = V::width;
  typename V::reg acc0[R];
  typename V::reg acc1[R];
  for (int r = 0; r < R; ++r) {
    acc0[r] = V::zero();
    acc1[r] = V::zero();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const typename V::reg b0 = V::load(bp + p * 2 * W);
    const typename V::reg b1 = V::load(bp + p * 2 * W + W);
    for (int r = 0; r < R; ++r) {
      const typename V::reg a = V::set1(ap[r * lda + p]);
      acc0[r] = V::fmadd(a, b0, acc0[r]);
      acc1[r] = V::fmadd(a, b1, acc1[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    V::store(tile + r * 2 * W, acc0[r]);
    V::store(tile + r * 2 * W + W, acc1[r]);
  }
}

template <typename T>
void run_tile(int rows, std::size_t k, const T* ap, std::size_t lda,
              const T* bp, T* tile) {
  switch (rows) {
    case 6: micro_tile<T, 6>(k, ap, lda, bp, tile); break;
    case 5: micro_tile<T, 5>(k, ap, lda, bp, tile); break;
    case 4: micro_tile<T, 4>(k, ap, lda, bp, tile); break;
    case 3: micro_tile<T, 3>(k, ap, lda, bp, tile); break;
    case 2: micro_tile<T, 2>(k, ap, lda, bp, tile); break;
    default: micro_tile<T, 1>(k, ap, lda, bp, tile); break;
  }
}

template <typename T>
void gemm_avx2(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
               const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
               std::size_t ldc, bool accumulate) {
  constexpr std::size_t NR = 2 * Vec<T>::width;
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, T(0));
    return;
  }

  thread_local std::vector<T> a_pack;
  thread_local std::vector<T> b_panel;
  const T* ap = a;
  std::size_t ap_ld = lda;
  if (ta) {
    a_pack.resize(m * k);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t i = 0; i < m; ++i) a_pack[i * k + p] = a[p * lda + i];
    ap = a_pack.data();
    ap_ld = k;
  }

  b_panel.resize(k * NR);
  T tile[kRowsPerTile * NR];

  for (std::size_t j0 = 0; j0 < n; j0 += NR) {
    const std::size_t cols = std::min(NR, n - j0);
    // Pack one column panel; it stays hot across every row block.
    if (!tb && cols == NR) {
      for (std::size_t p = 0; p < k; ++p)
        std::memcpy(b_panel.data() + p * NR, b + p * ldb + j0, NR * sizeof(T));
    } else {
      for (std::size_t p = 0; p < k; ++p) {
        T* dst = b_panel.data() + p * NR;
        for (std::size_t j = 0; j < NR; ++j) {
          const std::size_t col = j0 + j;
          dst[j] = j < cols ? (tb ? b[col * ldb + p] : b[p * ldb + col]) : T(0);
        }
      }
    }
    for (std::size_t i0 = 0; i0 < m; i0 += kRowsPerTile) {
      const int rows = static_cast<int>(std::min<std::size_t>(kRowsPerTile, m - i0));
      run_tile<T>(rows, k, ap + i0 * ap_ld, ap_ld, b_panel.data(), tile);
      for (int r = 0; r < rows; ++r) {
        T* crow = c + (i0 + r) * ldc + j0;
        const T* trow = tile + r * NR;
        if (accumulate) {
          for (std::size_t j = 0; j < cols; ++j) crow[j] += trow[j];
        } else {
          for (std::size_t j = 0; j < cols; ++j) crow[j] = trow[j];
        }
      }
    }
  }
}

template <typename T>
void axpy_avx2(std::size_t n, T alpha, const T* x, T* y) {
  using V = Vec<T>;
  constexpr std::size_t W = V::width;
  const auto va = V::set1(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(y + i, V::fmadd(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void add_avx2(std::size_t n, const T* a, const T* b, T* out) {
  using V = Vec<T>;
  constexpr std::size_t W = V::width;
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(out + i, V::add(V::load(a + i), V::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul_avx2(std::size_t n, const T* a, const T* b, T* out) {
  using V = Vec<T>;
  constexpr std::size_t W = V::width;
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(out + i, V::mul(V::load(a + i), V::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
T dot_avx2(std::size_t n, const T* a, const T* b) {
  using V = Vec<T>;
  constexpr std::size_t W = V::width;
  auto s0 = V::zero();
  auto s1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * W <= n; i += 2 * W) {
    s0 = V::fmadd(V::load(a + i), V::load(b + i), s0);
    s1 = V::fmadd(V::load(a + i + W), V::load(b + i + W), s1);
  }
  T s = V::hsum(V::add(s0, s1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
T sum_avx2(std::size_t n, const T* a) {
  using V = Vec<T>;
  constexpr std::size_t W = V::width;
  auto s0 = V::zero();
  auto s1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * W <= n; i += 2 * W) {
    s0 = V::add(V::load(a + i), s0);
    s1 = V::add(V::load(a + i + W), s1);
  }
  T s = V::hsum(V::add(s0, s1));
  for (; i < n; ++i) s += a[i];
  return s;
}

template <typename T>
void relu_avx2(std::size_t n, const T* a, T* out) {
  using V = Vec<T>;
  constexpr std::size_t W = V::width;
  const auto z = V::zero();
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(out + i, V::max(V::load(a + i), z));
  for (; i < n; ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
}

}  // namespace

template <typename T>
const KernelTable<T>* avx2_table() {
  static const KernelTable<T> table{&gemm_avx2<T>, &axpy_avx2<T>, &add_avx2<T>,
                                    &mul_avx2<T>,  &dot_avx2<T>,  &sum_avx2<T>,
                                    &relu_avx2<T>};
  return &table;
}

template const KernelTable<float>* avx2_table<float>();
template const KernelTable<double>* avx2_table<double>();

}  // namespace evlt::simd::detail
