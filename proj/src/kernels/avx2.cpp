#include "safetrack/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace safetrack {
namespace avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void matvec(const double* w, const double* x, const double* b, double* y, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* row = w + static_cast<std::ptrdiff_t>(r) * cols;
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    int c = 0;
    for (; c + 8 <= cols; c += 8) {
      acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(row + c), _mm256_loadu_pd(x + c), acc0);
      acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(row + c + 4), _mm256_loadu_pd(x + c + 4), acc1);
    }
    for (; c + 4 <= cols; c += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(row + c), _mm256_loadu_pd(x + c), acc0);
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; c < cols; ++c) acc += row[c] * x[c];
    y[r] = b ? acc + b[r] : acc;
  }
}

void matvec_t(const double* w, const double* g, double* x, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* row = w + static_cast<std::ptrdiff_t>(r) * cols;
    const __m256d gr = _mm256_set1_pd(g[r]);
    int c = 0;
    for (; c + 4 <= cols; c += 4)
      _mm256_storeu_pd(x + c, _mm256_fmadd_pd(_mm256_loadu_pd(row + c), gr, _mm256_loadu_pd(x + c)));
    for (; c < cols; ++c) x[c] += row[c] * g[r];
  }
}

void rank1(double* w, const double* g, const double* x, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    double* row = w + static_cast<std::ptrdiff_t>(r) * cols;
    const __m256d gr = _mm256_set1_pd(g[r]);
    int c = 0;
    for (; c + 4 <= cols; c += 4)
      _mm256_storeu_pd(row + c, _mm256_fmadd_pd(gr, _mm256_loadu_pd(x + c), _mm256_loadu_pd(row + c)));
    for (; c < cols; ++c) row[c] += g[r] * x[c];
  }
}

void adam(double* p, const double* g, double* m, double* v, std::size_t n, const AdamCoeffs& c) {
  const __m256d wd = _mm256_set1_pd(c.weight_decay);
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d one_b1 = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d one_b2 = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d inv_bias1 = _mm256_set1_pd(1.0 / c.bias1);
  const __m256d inv_bias2 = _mm256_set1_pd(1.0 / c.bias2);
  const __m256d eps = _mm256_set1_pd(c.eps);
  const __m256d lr = _mm256_set1_pd(c.lr);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d pi = _mm256_loadu_pd(p + i);
    const __m256d gi = _mm256_fmadd_pd(wd, pi, _mm256_loadu_pd(g + i));
    const __m256d mi = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(one_b1, gi));
    const __m256d vi = _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i), _mm256_mul_pd(one_b2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vi, inv_bias2)), eps);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, _mm256_mul_pd(mi, inv_bias1)), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(pi, step));
  }
  for (; i < n; ++i) {
    const double gi = g[i] + c.weight_decay * p[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
    p[i] -= c.lr * (m[i] / c.bias1) / (std::sqrt(v[i] / c.bias2) + c.eps);
  }
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{"avx2", matvec, matvec_t, rank1, adam};
  return t;
}

}  // namespace avx2
}  // namespace safetrack
