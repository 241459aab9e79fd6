#include <atomic>
#include <cstdlib>
#include <string>

#include "evlt/common/error.hpp"
#include "evlt/simd/kernels.hpp"

namespace evlt::simd {

#ifndef EVLT_HAVE_AVX2
namespace detail {
template <typename T>
const KernelTable<T>* avx2_table() {
  return nullptr;
}
template const KernelTable<float>* avx2_table<float>();
template const KernelTable<double>* avx2_table<double>();
}  // namespace detail
#endif

namespace {

bool cpu_has_avx2() {
#if defined(EVLT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  if (const char* env = std::getenv("EVLT_SIMD")) {
    if (std::string(env) == "scalar") return Isa::scalar;
  }
  return detected_isa();
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

Isa detected_isa() {
  static const bool avx2 = cpu_has_avx2();
  return avx2 ? Isa::avx2 : Isa::scalar;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::avx2 && detected_isa() != Isa::avx2)
    throw ContractError("set_active_isa: avx2 kernels unavailable on this build/CPU");
  active().store(isa, std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& kernels_for(Isa isa) {
  if (isa == Isa::avx2) {
    if (const auto* t = detail::avx2_table<T>(); t != nullptr && detected_isa() == Isa::avx2)
      return *t;
    throw ContractError("kernels_for: avx2 kernels unavailable on this build/CPU");
  }
  return detail::scalar_table<T>();
}

template <typename T>
const KernelTable<T>& kernels() {
  return active_isa() == Isa::avx2 ? *detail::avx2_table<T>()
                                   : detail::scalar_table<T>();
}

template const KernelTable<float>& kernels_for<float>(Isa);
template const KernelTable<double>& kernels_for<double>(Isa);
template const KernelTable<float>& kernels<float>();
template const KernelTable<double>& kernels<double>();

}  // namespace evlt::simd
