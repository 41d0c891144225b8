#include "safetrack/kernels.hpp"

#include <cmath>

namespace safetrack {
namespace {

void matvec(const double* w, const double* x, const double* b, double* y, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* row = w + static_cast<std::ptrdiff_t>(r) * cols;
    double acc = 0.0;
    for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = b ? acc + b[r] : acc;
  }
}

void matvec_t(const double* w, const double* g, double* x, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* row = w + static_cast<std::ptrdiff_t>(r) * cols;
    const double gr = g[r];
    for (int c = 0; c < cols; ++c) x[c] += row[c] * gr;
  }
}

void rank1(double* w, const double* g, const double* x, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    double* row = w + static_cast<std::ptrdiff_t>(r) * cols;
    const double gr = g[r];
    for (int c = 0; c < cols; ++c) row[c] += gr * x[c];
  }
}

void adam(double* p, const double* g, double* m, double* v, std::size_t n, const AdamCoeffs& c) {
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i] + c.weight_decay * p[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
    const double mhat = m[i] / c.bias1;
    const double vhat = v[i] / c.bias2;
    p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", matvec, matvec_t, rank1, adam};
  return table;
}

}  // namespace safetrack
