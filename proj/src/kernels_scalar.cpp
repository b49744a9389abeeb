#include "coln/kernels.hpp"

namespace coln::kernels {
namespace {

void axpy_scalar(double *y, const double *x, double a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double *y, const double *x, double a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

void accum_sq_diff_scalar(double *acc, const double *a, const double *b,
                          std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc[i] += d * d;
  }
}

// Lane-blocked reduction: four accumulators, element i goes to lane i % 4,
// final reduce (l0 + l1) + (l2 + l3). Matches the vector variants exactly.
double sum_sq_diff_scalar(const double *a, const double *b, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    lane[i % 4] += d * d;
  }
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double dot_scalar(const double *a, const double *b, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) lane[i % 4] += a[i] * b[i];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

}  // namespace

const KernelTable &scalar() {
  static const KernelTable table = {axpy_scalar, scale_scalar,
                                    accum_sq_diff_scalar, sum_sq_diff_scalar,
                                    dot_scalar, "scalar"};
  return table;
}

}  // namespace coln::kernels
