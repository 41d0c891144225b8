#include "safetrack/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace safetrack {

namespace {

void check_args(const DynamicsModel& m, const Vec& x, const Vec& u) {
  if (x.size() != m.state_dim() || u.size() != m.input_dim()) {
    std::ostringstream msg;
    msg << m.name() << ": expected state/input of size " << m.state_dim() << "/" << m.input_dim() << ", got "
        << x.size() << "/" << u.size();
    throw DimensionError(msg.str());
  }
}

IntervalMatrix zero_intervals(int size) { return IntervalMatrix(size, size); }

}  // namespace

Vec dubins_step(const Vec& x, const Vec& u, double sampling_time) {
  Vec next(3);
  next << x(0) + sampling_time * u(0) * std::cos(x(2)), x(1) + sampling_time * u(0) * std::sin(x(2)),
      x(2) + sampling_time * u(1);
  return next;
}

// ---------------------------------------------------------------------------
// DubinsCar

DubinsCar::DubinsCar(double sampling_time, Box disturbance)
    : DynamicsModel(std::move(disturbance)), ts_(sampling_time) {
  if (!(sampling_time > 0.0)) throw std::invalid_argument("DubinsCar: sampling time must be positive");
  if (this->disturbance().dim() != 3) throw DimensionError("DubinsCar: disturbance box must be 3-dimensional");
}

Vec DubinsCar::step(const Vec& x, const Vec& u) const {
  check_args(*this, x, u);
  return dubins_step(x, u, ts_);
}

Mat DubinsCar::jacobian_x(const Vec& x, const Vec& u) const {
  check_args(*this, x, u);
  Mat a = Mat::Identity(3, 3);
  a(0, 2) = -ts_ * u(0) * std::sin(x(2));
  a(1, 2) = ts_ * u(0) * std::cos(x(2));
  return a;
}

Mat DubinsCar::jacobian_u(const Vec& x, const Vec& u) const {
  check_args(*this, x, u);
  Mat b = Mat::Zero(3, 2);
  b(0, 0) = ts_ * std::cos(x(2));
  b(1, 0) = ts_ * std::sin(x(2));
  b(2, 1) = ts_;
  return b;
}

IntervalMatrix DubinsCar::interval_hessian(int i, const Box& tx, const Box& tu) const {
  if (i < 0 || i >= 3) throw std::out_of_range("DubinsCar::interval_hessian: component index");
  IntervalMatrix h = zero_intervals(5);
  if (i == 2) return h;
  const Interval th(tx.lower()(2), tx.upper()(2));
  const Interval speed(tu.lower()(0), tu.upper()(0));
  const Interval ts(ts_);
  // z = [x1 x2 x3 u1 u2]; only the (x3, x3) and (x3, u1) entries are nonzero.
  if (i == 0) {
    h(2, 2) = -(ts * speed * cos(th));
    h(2, 3) = -(ts * sin(th));
  } else {
    h(2, 2) = -(ts * speed * sin(th));
    h(2, 3) = ts * cos(th);
  }
  h(3, 2) = h(2, 3);
  return h;
}

Mat DubinsCar::hessian(int i, const Vec& x, const Vec& u) const {
  check_args(*this, x, u);
  Mat h = Mat::Zero(5, 5);
  if (i == 0) {
    h(2, 2) = -ts_ * u(0) * std::cos(x(2));
    h(2, 3) = h(3, 2) = -ts_ * std::sin(x(2));
  } else if (i == 1) {
    h(2, 2) = -ts_ * u(0) * std::sin(x(2));
    h(2, 3) = h(3, 2) = ts_ * std::cos(x(2));
  }
  return h;
}

// ---------------------------------------------------------------------------
// AffineModel

AffineModel::AffineModel(Mat a, Mat b, Vec c, Box disturbance)
    : DynamicsModel(std::move(disturbance)), a_(std::move(a)), b_(std::move(b)), c_(std::move(c)) {
  if (a_.rows() != a_.cols() || b_.rows() != a_.rows() || c_.size() != a_.rows() ||
      this->disturbance().dim() != a_.rows())
    throw DimensionError("AffineModel: inconsistent dimensions");
}

IntervalMatrix AffineModel::interval_hessian(int, const Box&, const Box&) const {
  return zero_intervals(state_dim() + input_dim());
}

Mat AffineModel::hessian(int, const Vec&, const Vec&) const {
  return Mat::Zero(state_dim() + input_dim(), state_dim() + input_dim());
}

// ---------------------------------------------------------------------------

std::vector<std::string> check_problem(const ProblemSpec& spec) {
  std::vector<std::string> issues;
  const int n = spec.operating.dim();
  auto dim_ok = [&](const Box& b, const char* what) {
    if (b.dim() != n) {
      issues.push_back(std::string(what) + " has dimension " + std::to_string(b.dim()) + ", expected " +
                       std::to_string(n));
      return false;
    }
    return true;
  };
  const bool init_ok = dim_ok(spec.initial, "initial set");
  const bool target_ok = dim_ok(spec.target, "target set");
  for (std::size_t i = 0; i < spec.unsafe.pieces.size(); ++i)
    dim_ok(spec.unsafe.pieces[i], ("unsafe piece " + std::to_string(i)).c_str());
  if (!issues.empty()) return issues;
  if (init_ok && !spec.operating.contains(spec.initial)) issues.emplace_back("initial set leaves the operating domain");
  if (target_ok && !spec.operating.contains(spec.target)) issues.emplace_back("target set leaves the operating domain");
  for (std::size_t i = 0; i < spec.unsafe.pieces.size(); ++i) {
    if (spec.unsafe.pieces[i].intersects(spec.initial))
      issues.push_back("initial set intersects unsafe piece " + std::to_string(i));
    if (spec.unsafe.pieces[i].intersects(spec.target))
      issues.push_back("target set intersects unsafe piece " + std::to_string(i));
  }
  return issues;
}

SafeRadii safe_box_radii(const ProblemSpec& spec, const Vec& x, double margin, const std::vector<AxisRole>& roles) {
  const int n = spec.operating.dim();
  if (x.size() != n || static_cast<int>(roles.size()) != n)
    throw DimensionError("safe_box_radii: state or role vector has the wrong dimension");
  SafeRadii r{Vec(n), Vec(n)};
  for (int j = 0; j < n; ++j) {
    double plus = spec.operating.upper()(j) - x(j);
    double minus = x(j) - spec.operating.lower()(j);
    if (roles[static_cast<std::size_t>(j)] == AxisRole::kSeparating) {
      for (const Box& piece : spec.unsafe.pieces) {
        const double ahead = piece.lower()(j) - x(j);
        const double behind = x(j) - piece.upper()(j);
        if (ahead > 0.0) plus = std::min(plus, ahead);
        if (behind > 0.0) minus = std::min(minus, behind);
      }
    }
    r.plus(j) = plus - margin;
    r.minus(j) = minus - margin;
  }
  return r;
}

Vec clearance_radii(const ProblemSpec& spec, const Vec& x, double margin, const std::vector<AxisRole>& roles) {
  const int n = spec.operating.dim();
  if (x.size() != n || static_cast<int>(roles.size()) != n)
    throw DimensionError("clearance_radii: state or role vector has the wrong dimension");
  Vec r = (spec.operating.upper() - x).cwiseMin(x - spec.operating.lower()).array() - margin;
  for (const Box& piece : spec.unsafe.pieces) {
    // Cut the separating axis that keeps the largest share of its radius.
    int best = -1;
    double best_keep = -kInf;
    bool apart = false;
    for (int j = 0; j < n && !apart; ++j) {
      if (roles[static_cast<std::size_t>(j)] != AxisRole::kSeparating) continue;
      const double gap = std::max(piece.lower()(j) - x(j), x(j) - piece.upper()(j));
      if (gap - r(j) > margin) {
        apart = true;
        break;
      }
      const double keep = r(j) > 0.0 ? (gap - margin) / r(j) : gap - margin;
      if (keep > best_keep) {
        best_keep = keep;
        best = j;
      }
    }
    if (apart || best < 0) continue;
    const double gap = std::max(piece.lower()(best) - x(best), x(best) - piece.upper()(best));
    r(best) = std::min(r(best), gap - margin);
  }
  return r;
}

bool separated_from_unsafe(const Box& b, const ProblemSpec& spec, const std::vector<AxisRole>& roles) {
  if (!spec.operating.contains(b)) return false;
  for (const Box& piece : spec.unsafe.pieces) {
    bool apart = false;
    for (int j = 0; j < b.dim() && !apart; ++j) {
      if (roles[static_cast<std::size_t>(j)] != AxisRole::kSeparating) continue;
      apart = b.upper()(j) < piece.lower()(j) || piece.upper()(j) < b.lower()(j);
    }
    if (!apart) return false;
  }
  return true;
}

std::vector<Mat> hessian_bounds(const DynamicsModel& model, const Box& tx, const Box& tu) {
  std::vector<Mat> out;
  out.reserve(static_cast<std::size_t>(model.state_dim()));
  for (int i = 0; i < model.state_dim(); ++i) out.push_back(magnitude(model.interval_hessian(i, tx, tu)));
  return out;
}

InvertibilityReport check_jacobian_invertibility(const DynamicsModel& model, const Box& region_x,
                                                 const Box& region_u, int samples, std::uint64_t seed,
                                                 double min_det, double max_condition) {
  InvertibilityReport report;
  if (samples <= 0) {
    report.min_abs_det = 0.0;
    return report;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = model.state_dim();
  for (int s = 0; s < samples; ++s) {
    Vec x(region_x.dim());
    Vec u(region_u.dim());
    for (int i = 0; i < x.size(); ++i)
      x(i) = region_x.lower()(i) + unit(rng) * (region_x.upper()(i) - region_x.lower()(i));
    for (int i = 0; i < u.size(); ++i)
      u(i) = region_u.lower()(i) + unit(rng) * (region_u.upper()(i) - region_u.lower()(i));
    const Mat a = model.jacobian_x(x, u);
    report.min_abs_det = std::min(report.min_abs_det, std::abs(a.determinant()));
    report.max_condition = std::max(report.max_condition, condition_number(a));
    const Mat pert = a - Mat::Identity(n, n);
    report.max_perturbation_norm = std::max(report.max_perturbation_norm, pert.cwiseAbs().rowwise().sum().maxCoeff());
  }
  report.samples = samples;
  report.pass = report.min_abs_det >= min_det && report.max_condition <= max_condition;
  return report;
}

}  // namespace safetrack
