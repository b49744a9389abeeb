#pragma once

#include <cstddef>
#include <string>

namespace coln::kernels {

// Inner-loop kernels for the combiner and the trainer. Scalar reference
// implementations always exist; AVX2 (x86) and NEON (aarch64) variants are
// selected once at startup and must produce bit-identical results to the
// scalar path. To make reductions reproducible across variants, every
// reduction kernel accumulates into four independent lanes (lane k takes
// elements i with i % 4 == k within each block of four) and reduces them as
// (l0 + l1) + (l2 + l3). Elementwise kernels use plain mul/add with no FMA
// contraction, so lane width cannot change the result.

struct KernelTable {
  // y[i] += a * x[i]
  void (*axpy)(double *y, const double *x, double a, std::size_t n);
  // y[i] = a * x[i]
  void (*scale)(double *y, const double *x, double a, std::size_t n);
  // acc[i] += (a[i] - b[i])^2
  void (*accum_sq_diff)(double *acc, const double *a, const double *b, std::size_t n);
  // sum over i of (a[i] - b[i])^2, lane-blocked accumulation
  double (*sum_sq_diff)(const double *a, const double *b, std::size_t n);
  // dot product, lane-blocked accumulation
  double (*dot)(const double *a, const double *b, std::size_t n);
  const char *name;
};

/// Active table, chosen from CPU features on first use.
const KernelTable &active();

/// Scalar reference table, always available (used by equivalence tests).
const KernelTable &scalar();

/// Force a specific variant by name ("scalar", "avx2", "neon").
/// Returns false if the variant is unavailable on this machine.
bool select(const std::string &name);

}  // namespace coln::kernels
