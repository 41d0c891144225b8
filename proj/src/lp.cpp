#include "safetrack/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace safetrack {

namespace {

constexpr double kCostTol = 1e-10;
constexpr double kPivotTol = 1e-11;

// Tableau form of  T y = beta,  0 <= y <= ub,  with basis bookkeeping.
// beta holds the current values of the basic variables; nonbasic variables
// sit at 0 or at their upper bound.
class BoundedSimplex {
 public:
  BoundedSimplex(Mat tableau, Vec beta, Vec ub, std::vector<int> basis)
      : t_(std::move(tableau)),
        beta_(std::move(beta)),
        ub_(std::move(ub)),
        basis_(std::move(basis)),
        at_upper_(static_cast<std::size_t>(t_.cols()), false),
        is_basic_(static_cast<std::size_t>(t_.cols()), false) {
    for (int b : basis_) is_basic_[static_cast<std::size_t>(b)] = true;
  }

  void set_upper(int j, double u) { ub_(j) = u; }

  // Runs primal simplex iterations for the given cost vector.
  LpStatus run(const Vec& cost, int& iterations, int max_iterations) {
    const auto m = t_.rows();
    const auto nv = t_.cols();
    Vec d = cost;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double cb = cost(basis_[static_cast<std::size_t>(i)]);
      if (cb != 0.0) d -= cb * t_.row(i).transpose();
    }
    while (true) {
      if (iterations >= max_iterations) return LpStatus::kIterationLimit;
      // Bland's rule: lowest-index improving column.
      int enter = -1;
      for (Eigen::Index j = 0; j < nv; ++j) {
        if (is_basic_[static_cast<std::size_t>(j)]) continue;
        const bool up = at_upper_[static_cast<std::size_t>(j)];
        if ((!up && d(j) < -kCostTol && ub_(j) > 0.0) || (up && d(j) > kCostTol)) {
          enter = static_cast<int>(j);
          break;
        }
      }
      if (enter < 0) return LpStatus::kOptimal;
      ++iterations;

      const double dir = at_upper_[static_cast<std::size_t>(enter)] ? -1.0 : 1.0;
      double theta = ub_(enter);
      int leave_row = -1;
      bool leave_to_upper = false;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double a = dir * t_(i, enter);
        double limit = kInf;
        bool to_upper = false;
        const int bi = basis_[static_cast<std::size_t>(i)];
        if (a > kPivotTol) {
          limit = std::max(0.0, beta_(i)) / a;
        } else if (a < -kPivotTol && std::isfinite(ub_(bi))) {
          limit = std::max(0.0, ub_(bi) - beta_(i)) / (-a);
          to_upper = true;
        } else {
          continue;
        }
        if (limit < theta ||
            (limit == theta && leave_row >= 0 && bi < basis_[static_cast<std::size_t>(leave_row)])) {
          theta = limit;
          leave_row = static_cast<int>(i);
          leave_to_upper = to_upper;
        }
      }
      if (!std::isfinite(theta)) return LpStatus::kUnbounded;

      // Move along the edge.
      for (Eigen::Index i = 0; i < m; ++i) beta_(i) -= dir * theta * t_(i, enter);
      if (leave_row < 0) {
        at_upper_[static_cast<std::size_t>(enter)] = !at_upper_[static_cast<std::size_t>(enter)];
        continue;
      }
      const double enter_value =
          at_upper_[static_cast<std::size_t>(enter)] ? ub_(enter) - theta : theta;
      const int leave = basis_[static_cast<std::size_t>(leave_row)];

      const double piv = t_(leave_row, enter);
      t_.row(leave_row) /= piv;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (i == leave_row) continue;
        const double f = t_(i, enter);
        if (f != 0.0) t_.row(i) -= f * t_.row(leave_row);
      }
      const double fd = d(enter);
      if (fd != 0.0) d -= fd * t_.row(leave_row).transpose();

      beta_(leave_row) = enter_value;
      basis_[static_cast<std::size_t>(leave_row)] = enter;
      is_basic_[static_cast<std::size_t>(enter)] = true;
      at_upper_[static_cast<std::size_t>(enter)] = false;
      is_basic_[static_cast<std::size_t>(leave)] = false;
      at_upper_[static_cast<std::size_t>(leave)] = leave_to_upper;
    }
  }

  Vec values() const {
    Vec y = Vec::Zero(t_.cols());
    for (Eigen::Index j = 0; j < t_.cols(); ++j)
      if (at_upper_[static_cast<std::size_t>(j)]) y(j) = ub_(j);
    for (std::size_t i = 0; i < basis_.size(); ++i)
      y(basis_[i]) = std::clamp(beta_(static_cast<Eigen::Index>(i)), 0.0, ub_(basis_[i]));
    return y;
  }

 private:
  Mat t_;
  Vec beta_;
  Vec ub_;
  std::vector<int> basis_;
  std::vector<bool> at_upper_;
  std::vector<bool> is_basic_;
};

}  // namespace

LpResult solve_lp(const LinearProgram& lp, int max_iterations) {
  const auto m = lp.a.rows();
  const auto n = lp.a.cols();
  if (lp.b.size() != m || lp.c.size() != n || lp.lower.size() != n || lp.upper.size() != n)
    throw DimensionError("solve_lp: inconsistent problem dimensions");
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!std::isfinite(lp.lower(j)) || lp.upper(j) < lp.lower(j))
      throw std::invalid_argument("solve_lp: invalid bounds for variable " + std::to_string(j));
  }

  // Shift to 0 <= y <= upper - lower and make the right-hand side nonnegative.
  Vec rhs = lp.b - lp.a * lp.lower;
  Mat tab(m, n + m);
  tab.leftCols(n) = lp.a;
  tab.rightCols(m).setIdentity();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (rhs(i) < 0.0) {
      tab.row(i).head(n) *= -1.0;
      rhs(i) = -rhs(i);
    }
  }
  Vec ub(n + m);
  ub.head(n) = lp.upper - lp.lower;
  ub.tail(m).setConstant(kInf);
  std::vector<int> basis(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) basis[static_cast<std::size_t>(i)] = static_cast<int>(n + i);

  BoundedSimplex simplex(std::move(tab), rhs, std::move(ub), std::move(basis));
  LpResult result;

  Vec phase1 = Vec::Zero(n + m);
  phase1.tail(m).setOnes();
  LpStatus st = simplex.run(phase1, result.iterations, max_iterations);
  if (st == LpStatus::kIterationLimit) {
    result.status = st;
    return result;
  }
  const Vec y1 = simplex.values();
  const double infeas = y1.tail(m).sum();
  if (infeas > 1e-9 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) {
    result.status = LpStatus::kInfeasible;
    return result;
  }

  // Artificials are pinned at zero for phase 2.
  for (Eigen::Index i = 0; i < m; ++i) simplex.set_upper(static_cast<int>(n + i), 0.0);
  Vec phase2 = Vec::Zero(n + m);
  phase2.head(n) = lp.c;
  st = simplex.run(phase2, result.iterations, max_iterations);
  result.status = st;
  if (st != LpStatus::kOptimal) return result;
  result.x = lp.lower + simplex.values().head(n);
  result.objective = lp.c.dot(result.x);
  return result;
}

}  // namespace safetrack
