#pragma once

// Dense arithmetic kernels behind the tensor primitives. Every kernel has a
// portable scalar reference and, on x86-64, an AVX2/FMA variant. The variant
// is picked once at startup from CPUID; EVLT_SIMD=scalar in the environment
// forces the reference path.

#include <cstddef>
#include <string_view>

namespace evlt::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// Best ISA that is both compiled in and supported by the running CPU.
Isa detected_isa();

/// ISA currently used by `kernels<T>()`.
Isa active_isa();

/// Switch the active ISA. Throws ContractError if `isa` is unavailable.
/// Not thread-safe; intended for tests and benchmarks.
void set_active_isa(Isa isa);

template <typename T>
struct KernelTable {
  /// C = op(A) * op(B) (+ C when accumulate). op(A) is M x K, op(B) is K x N.
  /// All matrices row-major with the given leading dimensions.
  void (*gemm)(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
               std::size_t k, const T* a, std::size_t lda, const T* b,
               std::size_t ldb, T* c, std::size_t ldc, bool accumulate);
  /// y += alpha * x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
  /// out = a + b
  void (*add)(std::size_t n, const T* a, const T* b, T* out);
  /// out = a * b
  void (*mul)(std::size_t n, const T* a, const T* b, T* out);
  T (*dot)(std::size_t n, const T* a, const T* b);
  T (*sum)(std::size_t n, const T* a);
  /// out = max(a, 0)
  void (*relu)(std::size_t n, const T* a, T* out);
};

template <typename T>
const KernelTable<T>& kernels();

template <typename T>
const KernelTable<T>& kernels_for(Isa isa);

namespace detail {
template <typename T>
const KernelTable<T>& scalar_table();
template <typename T>
const KernelTable<T>* avx2_table();  // nullptr when not compiled in
}  // namespace detail

}  // namespace evlt::simd
