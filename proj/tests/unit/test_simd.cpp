#include <random>
#include <vector>

#include "doctest.h"
#include "evlt/simd/kernels.hpp"

using evlt::simd::Isa;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

template <typename T>
void check_gemm_equivalence(double tol) {
  const auto& ref = evlt::simd::kernels_for<T>(Isa::scalar);
  const auto& fast = evlt::simd::kernels_for<T>(Isa::avx2);
  std::mt19937_64 rng(42);
  // Shapes straddle the 6-row and 16/8-column tile edges.
  const std::size_t dims[][3] = {{1, 1, 1},  {3, 5, 7},   {6, 16, 9},  {7, 17, 33},
                                 {16, 4096, 27}, {13, 31, 300}, {30, 64, 144}};
  for (const auto& d : dims) {
    const std::size_t m = d[0], n = d[1], k = d[2];
    for (int ta = 0; ta < 2; ++ta)
      for (int tb = 0; tb < 2; ++tb)
        for (int acc = 0; acc < 2; ++acc) {
          auto a = random_vec<T>(m * k, rng);
          auto b = random_vec<T>(k * n, rng);
          auto c0 = random_vec<T>(m * n, rng);
          auto c1 = c0;
          const std::size_t lda = ta ? m : k, ldb = tb ? k : n;
          ref.gemm(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, c0.data(), n, acc);
          fast.gemm(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, c1.data(), n, acc);
          for (std::size_t i = 0; i < c0.size(); ++i)
            REQUIRE(std::abs(static_cast<double>(c0[i]) - c1[i]) <= tol * (1.0 + std::abs(c0[i])));
        }
  }
}

template <typename T>
void check_vector_equivalence(double tol) {
  const auto& ref = evlt::simd::kernels_for<T>(Isa::scalar);
  const auto& fast = evlt::simd::kernels_for<T>(Isa::avx2);
  std::mt19937_64 rng(7);
  for (std::size_t n : {0u, 1u, 7u, 8u, 15u, 16u, 33u, 1000u}) {
    auto a = random_vec<T>(n, rng);
    auto b = random_vec<T>(n, rng);
    std::vector<T> o0(n), o1(n);
    ref.add(n, a.data(), b.data(), o0.data());
    fast.add(n, a.data(), b.data(), o1.data());
    CHECK(o0 == o1);
    ref.mul(n, a.data(), b.data(), o0.data());
    fast.mul(n, a.data(), b.data(), o1.data());
    CHECK(o0 == o1);
    ref.relu(n, a.data(), o0.data());
    fast.relu(n, a.data(), o1.data());
    CHECK(o0 == o1);
    auto y0 = b, y1 = b;
    ref.axpy(n, T(0.3), a.data(), y0.data());
    fast.axpy(n, T(0.3), a.data(), y1.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(double(y0[i]) - y1[i]) <= tol);
    CHECK(std::abs(double(ref.dot(n, a.data(), b.data())) - fast.dot(n, a.data(), b.data())) <= tol * (1.0 + n));
    CHECK(std::abs(double(ref.sum(n, a.data())) - fast.sum(n, a.data())) <= tol * (1.0 + n));
  }
}

}  // namespace

TEST_CASE("scalar kernels: gemm matches a textbook triple loop") {
  const auto& ref = evlt::simd::kernels_for<double>(Isa::scalar);
  const std::vector<double> a{1, 2, 3, 4, 5, 6};  // 2x3
  const std::vector<double> b{7, 8, 9, 10, 11, 12};  // 3x2
  std::vector<double> c(4, 0.0);
  ref.gemm(false, false, 2, 2, 3, a.data(), 3, b.data(), 2, c.data(), 2, false);
  CHECK(c == std::vector<double>{58, 64, 139, 154});
  ref.gemm(false, false, 2, 2, 3, a.data(), 3, b.data(), 2, c.data(), 2, true);
  CHECK(c == std::vector<double>{116, 128, 278, 308});
}

TEST_CASE("avx2 kernels are equivalent to the scalar reference") {
  if (evlt::simd::detected_isa() != Isa::avx2) {
    MESSAGE("AVX2 not available; equivalence test skipped");
    return;
  }
  check_gemm_equivalence<double>(1e-12);
  check_gemm_equivalence<float>(2e-5);
  check_vector_equivalence<double>(1e-12);
  check_vector_equivalence<float>(1e-5);
}

TEST_CASE("active isa can be switched and restored") {
  const Isa before = evlt::simd::active_isa();
  evlt::simd::set_active_isa(Isa::scalar);
  CHECK(evlt::simd::active_isa() == Isa::scalar);
  CHECK(&evlt::simd::kernels<float>() == &evlt::simd::kernels_for<float>(Isa::scalar));
  evlt::simd::set_active_isa(before);
  CHECK(evlt::simd::isa_name(Isa::avx2) == "avx2");
}
