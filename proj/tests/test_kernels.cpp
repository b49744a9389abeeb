#include <doctest.h>

#include <cstring>
#include <vector>

#include "coln/kernels.hpp"
#include "coln/prng.hpp"

using coln::Xoshiro256;
namespace kernels = coln::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, Xoshiro256 &rng) {
  std::vector<double> v(n);
  for (auto &x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

bool bit_equal(double a, double b) {
  return std::memcmp(&a, &b, sizeof(double)) == 0;
}

bool bit_equal(const std::vector<double> &a, const std::vector<double> &b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("active kernel table is installed") {
  const auto &table = kernels::active();
  CHECK(table.axpy != nullptr);
  CHECK(table.name != nullptr);
}

TEST_CASE("vector variants match scalar bit-for-bit") {
  const auto &vec = kernels::active();
  const auto &ref = kernels::scalar();
  if (std::string(vec.name) == "scalar") {
    MESSAGE("no vector variant on this machine, skipping equivalence checks");
    return;
  }

  Xoshiro256 rng(2024);
  // odd lengths exercise the tail paths
  for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 7u, 8u, 15u, 16u, 33u, 100u, 1001u}) {
    const auto a = random_vector(n, rng);
    const auto b = random_vector(n, rng);
    const double coeff = rng.uniform(-3.0, 3.0);

    auto y1 = random_vector(n, rng);
    auto y2 = y1;
    ref.axpy(y1.data(), a.data(), coeff, n);
    vec.axpy(y2.data(), a.data(), coeff, n);
    CHECK(bit_equal(y1, y2));

    std::vector<double> s1(n), s2(n);
    ref.scale(s1.data(), a.data(), coeff, n);
    vec.scale(s2.data(), a.data(), coeff, n);
    CHECK(bit_equal(s1, s2));

    auto acc1 = random_vector(n, rng);
    auto acc2 = acc1;
    ref.accum_sq_diff(acc1.data(), a.data(), b.data(), n);
    vec.accum_sq_diff(acc2.data(), a.data(), b.data(), n);
    CHECK(bit_equal(acc1, acc2));

    CHECK(bit_equal(ref.sum_sq_diff(a.data(), b.data(), n),
                    vec.sum_sq_diff(a.data(), b.data(), n)));
    CHECK(bit_equal(ref.dot(a.data(), b.data(), n), vec.dot(a.data(), b.data(), n)));
  }
}

TEST_CASE("reductions agree with a plain sequential loop") {
  Xoshiro256 rng(7);
  const auto &table = kernels::active();
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.bounded(200);
    const auto a = random_vector(n, rng);
    const auto b = random_vector(n, rng);
    double expected_ssd = 0.0, expected_dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = a[i] - b[i];
      expected_ssd += d * d;
      expected_dot += a[i] * b[i];
    }
    CHECK(table.sum_sq_diff(a.data(), b.data(), n) ==
          doctest::Approx(expected_ssd).epsilon(1e-13));
    CHECK(table.dot(a.data(), b.data(), n) ==
          doctest::Approx(expected_dot).epsilon(1e-13));
  }
}

TEST_CASE("kernel selection by name") {
  CHECK(kernels::select("scalar"));
  CHECK(std::string(kernels::active().name) == "scalar");
  CHECK_FALSE(kernels::select("no-such-variant"));
  // restore the auto-detected variant for other tests in this binary
#if defined(__x86_64__)
  if (__builtin_cpu_supports("avx2")) CHECK(kernels::select("avx2"));
#endif
}
