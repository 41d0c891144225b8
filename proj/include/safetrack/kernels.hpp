#pragma once

// Dense-layer kernels used by the controller network. Matrices are row-major
// with `rows` outputs and `cols` inputs. Each variant computes the same
// results up to floating-point reassociation.

#include <cstddef>

namespace safetrack {

struct AdamCoeffs {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  /// 1 - beta1^t and 1 - beta2^t for the current step t.
  double bias1 = 1.0;
  double bias2 = 1.0;
};

struct KernelTable {
  const char* name;
  /// y = W x + b (b may be null).
  void (*matvec)(const double* w, const double* x, const double* b, double* y, int rows, int cols);
  /// x += W^T g.
  void (*matvec_t)(const double* w, const double* g, double* x, int rows, int cols);
  /// W += g x^T.
  void (*rank1)(double* w, const double* g, const double* x, int rows, int cols);
  /// Adam step with L2 weight decay folded into the gradient.
  void (*adam)(double* p, const double* g, double* m, double* v, std::size_t n, const AdamCoeffs& c);
};

const KernelTable& scalar_kernels();
/// Null when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

/// Best available table; SAFETRACK_SIMD=scalar|avx2 overrides the choice.
const KernelTable& active_kernels();

}  // namespace safetrack
