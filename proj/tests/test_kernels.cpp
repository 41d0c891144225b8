#include "support.hpp"

#include "safetrack/kernels.hpp"

#include <doctest.h>

#include <cstdlib>
#include <cstring>

using namespace safetrack;

namespace {

std::vector<double> randoms(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Reassociation bound for a dot product of length n.
double dot_tol(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::abs(a[i] * b[i]);
  return 4.0 * n * 1.2e-16 * (s + 1e-300);
}

void check_equivalent(const KernelTable& ref, const KernelTable& simd) {
  std::mt19937_64 rng(123);
  for (int rows = 1; rows <= 37; rows += 3) {
    for (int cols = 1; cols <= 41; cols += 2) {
      const auto w = randoms(static_cast<std::size_t>(rows * cols), rng);
      const auto x = randoms(static_cast<std::size_t>(cols), rng);
      const auto b = randoms(static_cast<std::size_t>(rows), rng);
      const auto g = randoms(static_cast<std::size_t>(rows), rng);

      std::vector<double> y0(rows), y1(rows);
      ref.matvec(w.data(), x.data(), b.data(), y0.data(), rows, cols);
      simd.matvec(w.data(), x.data(), b.data(), y1.data(), rows, cols);
      for (int r = 0; r < rows; ++r) CHECK(std::abs(y0[r] - y1[r]) <= dot_tol(&w[r * cols], x.data(), cols) + 1e-16);
      ref.matvec(w.data(), x.data(), nullptr, y0.data(), rows, cols);
      simd.matvec(w.data(), x.data(), nullptr, y1.data(), rows, cols);
      for (int r = 0; r < rows; ++r) CHECK(std::abs(y0[r] - y1[r]) <= dot_tol(&w[r * cols], x.data(), cols) + 1e-16);

      auto t0 = randoms(static_cast<std::size_t>(cols), rng);
      auto t1 = t0;
      ref.matvec_t(w.data(), g.data(), t0.data(), rows, cols);
      simd.matvec_t(w.data(), g.data(), t1.data(), rows, cols);
      for (int c = 0; c < cols; ++c) CHECK(std::abs(t0[c] - t1[c]) <= 4.0 * rows * 1.2e-16 * (rows + 1));

      auto w0 = w;
      auto w1 = w;
      ref.rank1(w0.data(), g.data(), x.data(), rows, cols);
      simd.rank1(w1.data(), g.data(), x.data(), rows, cols);
      for (std::size_t i = 0; i < w0.size(); ++i) CHECK(std::abs(w0[i] - w1[i]) <= 1e-15);
    }
  }
  for (std::size_t n : {1u, 3u, 4u, 7u, 64u, 1001u}) {
    auto p0 = randoms(n, rng);
    const auto grad = randoms(n, rng);
    auto m0 = randoms(n, rng);
    auto v0 = randoms(n, rng, 0.0, 1.0);
    auto p1 = p0, m1 = m0, v1 = v0;
    AdamCoeffs c;
    c.weight_decay = 1e-4;
    c.bias1 = 1.0 - 0.9 * 0.9;
    c.bias2 = 1.0 - 0.999 * 0.999;
    ref.adam(p0.data(), grad.data(), m0.data(), v0.data(), n, c);
    simd.adam(p1.data(), grad.data(), m1.data(), v1.data(), n, c);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(m0[i] == doctest::Approx(m1[i]).epsilon(1e-14));
      CHECK(v0[i] == doctest::Approx(v1[i]).epsilon(1e-14));
      CHECK(p0[i] == doctest::Approx(p1[i]).epsilon(1e-14));
    }
  }
}

}  // namespace

TEST_CASE("scalar kernels compute the textbook results") {
  const KernelTable& k = scalar_kernels();
  const double w[6] = {1, 2, 3, 4, 5, 6};
  const double x[3] = {1, 0, -1};
  const double b[2] = {0.5, -0.5};
  double y[2];
  k.matvec(w, x, b, y, 2, 3);
  CHECK(y[0] == 1 - 3 + 0.5);
  CHECK(y[1] == 4 - 6 - 0.5);
  double t[3] = {0, 0, 0};
  const double g[2] = {1, 2};
  k.matvec_t(w, g, t, 2, 3);
  CHECK(t[0] == 9);
  CHECK(t[1] == 12);
  CHECK(t[2] == 15);
  double r[6] = {0, 0, 0, 0, 0, 0};
  k.rank1(r, g, x, 2, 3);
  CHECK(r[0] == 1);
  CHECK(r[2] == -1);
  CHECK(r[5] == -2);

  // One Adam step from zero moments moves each parameter by about lr against the gradient sign.
  double p[2] = {1, 1};
  const double gr[2] = {0.3, -2};
  double m[2] = {0, 0}, v[2] = {0, 0};
  AdamCoeffs c;
  c.lr = 1e-3;
  c.bias1 = 0.1;
  c.bias2 = 0.001;
  k.adam(p, gr, m, v, 2, c);
  CHECK(p[0] == doctest::Approx(1 - 1e-3).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(1 + 1e-3).epsilon(1e-6));
}

TEST_CASE("vector kernels agree with the scalar reference") {
  const KernelTable* simd = avx2_kernels();
  if (!simd) {
    MESSAGE("AVX2 kernels unavailable on this build or CPU; nothing to compare");
    return;
  }
  CHECK(std::strcmp(simd->name, "avx2") == 0);
  check_equivalent(scalar_kernels(), *simd);
}

TEST_CASE("kernel selection") {
  const KernelTable& active = active_kernels();
  const char* env = std::getenv("SAFETRACK_SIMD");
  if (env && std::string(env) == "scalar")
    CHECK(&active == &scalar_kernels());
  else if (avx2_kernels())
    CHECK(&active == avx2_kernels());
  else
    CHECK(&active == &scalar_kernels());
}
