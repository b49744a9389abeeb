// AVX2 variants. Compiled with -mavx2 only; dispatch checks cpu support at
// runtime before installing this table. No FMA: mul/add must round the same
// way as the scalar reference.

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include "coln/kernels.hpp"

namespace coln::kernels {
namespace {

void axpy_avx2(double *y, const double *x, double a, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    __m256d vx = _mm256_loadu_pd(x + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, vx));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(double *y, const double *x, double a, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = a * x[i];
}

void accum_sq_diff_avx2(double *acc, const double *a, const double *b,
                        std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    const __m256d v = _mm256_add_pd(_mm256_loadu_pd(acc + i), _mm256_mul_pd(d, d));
    _mm256_storeu_pd(acc + i, v);
  }
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    acc[i] += d * d;
  }
}

// Reductions spill the vector accumulator to its four lanes, fold the tail
// into lanes 0..2, then reduce (l0 + l1) + (l2 + l3) like the scalar path.
double sum_sq_diff_avx2(const double *a, const double *b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  for (std::size_t t = 0; i < n; ++i, ++t) {
    const double d = a[i] - b[i];
    lane[t] += d * d;
  }
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double dot_avx2(const double *a, const double *b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  for (std::size_t t = 0; i < n; ++i, ++t) lane[t] += a[i] * b[i];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

}  // namespace

const KernelTable *avx2_table() {
  static const KernelTable table = {axpy_avx2, scale_avx2, accum_sq_diff_avx2,
                                    sum_sq_diff_avx2, dot_avx2, "avx2"};
  return &table;
}

}  // namespace coln::kernels

#endif
