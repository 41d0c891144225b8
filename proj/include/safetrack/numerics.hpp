#pragma once

// Small dense linear algebra, interval arithmetic and a bounded-variable
// simplex used by the set computations.

#include <Eigen/Dense>

#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace safetrack {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Raised when a matrix that must be inverted is singular or too badly
/// conditioned to trust.
class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Closed interval [lo, hi]. Arithmetic returns enclosures of the exact range.
class Interval {
 public:
  Interval() = default;
  explicit Interval(double v) : lo_(v), hi_(v) {}
  Interval(double lo, double hi);

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double width() const { return hi_ - lo_; }
  double mid() const { return 0.5 * (lo_ + hi_); }
  /// max |v| over the interval.
  double mag() const;
  bool contains(double v) const { return lo_ <= v && v <= hi_; }

  friend Interval operator+(const Interval& a, const Interval& b);
  friend Interval operator-(const Interval& a, const Interval& b);
  friend Interval operator-(const Interval& a);
  friend Interval operator*(const Interval& a, const Interval& b);
  friend Interval operator*(double s, const Interval& a);

 private:
  double lo_ = 0.0;
  double hi_ = 0.0;
};

Interval sin(const Interval& x);
Interval cos(const Interval& x);

/// Dense row-major matrix of intervals (storage only, no arithmetic).
class IntervalMatrix {
 public:
  IntervalMatrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols)) {}
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  Interval& operator()(int i, int j) { return data_[static_cast<std::size_t>(i * cols_ + j)]; }
  const Interval& operator()(int i, int j) const { return data_[static_cast<std::size_t>(i * cols_ + j)]; }

 private:
  int rows_;
  int cols_;
  std::vector<Interval> data_;
};

/// Entry-wise magnitude bound of an interval matrix: (H)_{pq} = mag(I_{pq}).
Mat magnitude(const IntervalMatrix& m);

/// Inverse with an explicit conditioning guard. `context` is appended to the
/// error message (e.g. the time step the matrix belongs to).
Mat invert(const Mat& m, const std::string& context = {}, double max_condition = 1e10);

/// 2-norm condition number (ratio of extreme singular values).
double condition_number(const Mat& m);

/// Moore-Penrose inverse via SVD, truncating singular values below
/// 1e-10 times the largest one.
Mat pseudoinverse(const Mat& m);

// ---------------------------------------------------------------------------
// Linear programming

enum class LpStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit };

/// minimize c'x  subject to  A x = b,  lower <= x <= upper.
/// Upper bounds may be +inf; lower bounds must be finite.
struct LinearProgram {
  Mat a;
  Vec b;
  Vec c;
  Vec lower;
  Vec upper;
};

struct LpResult {
  LpStatus status = LpStatus::kInfeasible;
  Vec x;
  double objective = 0.0;
  int iterations = 0;
};

/// Dense bounded-variable two-phase primal simplex with Bland's rule.
/// Sized for the tiny problems of the set computations (tens of rows,
/// at most a few thousand columns).
LpResult solve_lp(const LinearProgram& lp, int max_iterations = 100000);

/// Finds b in [-1,1]^q with G b = y, or nullopt when none exists.
std::optional<Vec> bounded_feasible(const Mat& g, const Vec& y);

/// Smallest s >= 0 with y in s * G * B (the zonotope gauge); +inf when y is
/// outside the range of G.
double zonotope_gauge(const Mat& g, const Vec& y);

}  // namespace safetrack
