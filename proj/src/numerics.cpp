#include "safetrack/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace safetrack {

namespace {

// One-ulp outward widening keeps interval results enclosing the exact range
// despite round-to-nearest.
double down(double v) { return std::nextafter(v, -kInf); }
double up(double v) { return std::nextafter(v, kInf); }

}  // namespace

Interval::Interval(double lo, double hi) : lo_(lo), hi_(hi) {
  if (!(lo <= hi)) {
    std::ostringstream msg;
    msg << "Interval: lower bound " << lo << " exceeds upper bound " << hi;
    throw std::invalid_argument(msg.str());
  }
}

double Interval::mag() const { return std::max(std::abs(lo_), std::abs(hi_)); }

Interval operator+(const Interval& a, const Interval& b) { return {down(a.lo_ + b.lo_), up(a.hi_ + b.hi_)}; }

Interval operator-(const Interval& a, const Interval& b) { return {down(a.lo_ - b.hi_), up(a.hi_ - b.lo_)}; }

Interval operator-(const Interval& a) { return {-a.hi_, -a.lo_}; }

Interval operator*(const Interval& a, const Interval& b) {
  const double p[4] = {a.lo_ * b.lo_, a.lo_ * b.hi_, a.hi_ * b.lo_, a.hi_ * b.hi_};
  return {down(*std::min_element(p, p + 4)), up(*std::max_element(p, p + 4))};
}

Interval operator*(double s, const Interval& a) { return Interval(s) * a; }

Interval sin(const Interval& x) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  if (x.width() >= kTwoPi) return {-1.0, 1.0};
  double lo = std::min(std::sin(x.lo()), std::sin(x.hi()));
  double hi = std::max(std::sin(x.lo()), std::sin(x.hi()));
  // Interior extrema at pi/2 + 2k pi (max) and -pi/2 + 2k pi (min).
  const double k_max = std::ceil((x.lo() - std::numbers::pi / 2) / kTwoPi);
  if (std::numbers::pi / 2 + k_max * kTwoPi <= x.hi()) hi = 1.0;
  const double k_min = std::ceil((x.lo() + std::numbers::pi / 2) / kTwoPi);
  if (-std::numbers::pi / 2 + k_min * kTwoPi <= x.hi()) lo = -1.0;
  return {std::max(-1.0, down(lo)), std::min(1.0, up(hi))};
}

Interval cos(const Interval& x) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  if (x.width() >= kTwoPi) return {-1.0, 1.0};
  double lo = std::min(std::cos(x.lo()), std::cos(x.hi()));
  double hi = std::max(std::cos(x.lo()), std::cos(x.hi()));
  // Interior extrema at 2k pi (max) and pi + 2k pi (min).
  if (std::ceil(x.lo() / kTwoPi) * kTwoPi <= x.hi()) hi = 1.0;
  if (std::numbers::pi + std::ceil((x.lo() - std::numbers::pi) / kTwoPi) * kTwoPi <= x.hi()) lo = -1.0;
  return {std::max(-1.0, down(lo)), std::min(1.0, up(hi))};
}

Mat magnitude(const IntervalMatrix& m) {
  Mat out(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out(i, j) = m(i, j).mag();
  return out;
}

double condition_number(const Mat& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<Mat> svd(m);
  const Vec& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (smin == 0.0) return kInf;
  return s(0) / smin;
}

Mat invert(const Mat& m, const std::string& context, double max_condition) {
  if (m.rows() != m.cols()) {
    throw DimensionError("invert: matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         ", expected square");
  }
  const double cond = condition_number(m);
  if (!(cond <= max_condition)) {
    std::ostringstream msg;
    msg << "invert: matrix is singular or ill-conditioned (condition number " << cond << ")";
    if (!context.empty()) msg << " at " << context;
    throw SingularMatrixError(msg.str());
  }
  return m.fullPivLu().inverse();
}

Mat pseudoinverse(const Mat& m) {
  if (m.size() == 0) return Mat::Zero(m.cols(), m.rows());
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double tol = 1e-10 * (s.size() > 0 ? s(0) : 0.0);
  Vec inv = Vec::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) inv(i) = 1.0 / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

std::optional<Vec> bounded_feasible(const Mat& g, const Vec& y) {
  if (g.rows() != y.size()) throw DimensionError("bounded_feasible: G rows do not match y");
  const auto q = g.cols();
  if (q == 0) {
    if (y.lpNorm<Eigen::Infinity>() <= 1e-12) return Vec::Zero(0);
    return std::nullopt;
  }
  LinearProgram lp;
  lp.a = g;
  lp.b = y;
  lp.c = Vec::Zero(q);
  lp.lower = Vec::Constant(q, -1.0);
  lp.upper = Vec::Constant(q, 1.0);
  LpResult res = solve_lp(lp);
  if (res.status != LpStatus::kOptimal) return std::nullopt;
  Vec b = res.x.cwiseMax(-1.0).cwiseMin(1.0);
  if ((g * b - y).lpNorm<Eigen::Infinity>() > 1e-8) return std::nullopt;
  return b;
}

double zonotope_gauge(const Mat& g, const Vec& y) {
  const auto n = g.rows();
  const auto q = g.cols();
  if (y.size() != n) throw DimensionError("zonotope_gauge: G rows do not match y");
  if (y.lpNorm<Eigen::Infinity>() == 0.0) return 0.0;
  if (q == 0) return kInf;
  // Variables: p (q), m (q), s, slack (q).  G(p - m) = y;  p_i + m_i - s + slack_i = 0.
  const auto nv = 3 * q + 1;
  LinearProgram lp;
  lp.a = Mat::Zero(n + q, nv);
  lp.a.block(0, 0, n, q) = g;
  lp.a.block(0, q, n, q) = -g;
  for (Eigen::Index i = 0; i < q; ++i) {
    lp.a(n + i, i) = 1.0;
    lp.a(n + i, q + i) = 1.0;
    lp.a(n + i, 2 * q) = -1.0;
    lp.a(n + i, 2 * q + 1 + i) = 1.0;
  }
  lp.b = Vec::Zero(n + q);
  lp.b.head(n) = y;
  lp.c = Vec::Zero(nv);
  lp.c(2 * q) = 1.0;
  lp.lower = Vec::Zero(nv);
  lp.upper = Vec::Constant(nv, kInf);
  LpResult res = solve_lp(lp);
  if (res.status != LpStatus::kOptimal) return kInf;
  return res.x(2 * q);
}

}  // namespace safetrack
