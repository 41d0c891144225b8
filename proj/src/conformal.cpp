#include "safetrack/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <sstream>

namespace safetrack {

SafeSetSequence build_safe_sets(const NominalTrajectory& traj, const ProblemSpec& spec, double margin,
                                const std::vector<AxisRole>& roles) {
  SafeSetSequence out;
  out.margin = margin;
  out.roles = roles;
  for (int k = 0; k < traj.horizon(); ++k) {
    const Vec& x = traj.states[static_cast<std::size_t>(k)];
    const SafeRadii r = safe_box_radii(spec, x, margin, roles);
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      if (r.plus(j) < 0.0 || r.minus(j) < 0.0) {
        std::ostringstream msg;
        msg << "safe set at k=" << k << " has a negative radius on axis j=" << j << " (r+ " << r.plus(j) << ", r- "
            << r.minus(j) << ")";
        throw SafeSetError(msg.str(), k, static_cast<int>(j));
      }
    }
    Box box(x - r.minus, x + r.plus);
    if (!separated_from_unsafe(box, spec, roles))
      throw SafeSetError("safe set at k=" + std::to_string(k) + " is not separated from the unsafe set", k, -1);
    out.boxes.push_back(std::move(box));
    out.plus.push_back(r.plus);
    out.minus.push_back(r.minus);
  }
  return out;
}

Score score(const std::vector<Vec>& states, const SafeSetSequence& safe, const Box& target) {
  if (states.size() != safe.boxes.size() + 1) throw DimensionError("score: trajectory and safe-set horizons differ");
  Score s;
  for (std::size_t k = 0; k < safe.boxes.size(); ++k) s.steps.push_back(safe.boxes[k].distance(states[k]));
  s.steps.push_back(target.distance(states.back()));
  for (double v : s.steps) s.total += v;
  return s;
}

long quantile_index(int count, double delta) {
  if (count < 1) throw std::invalid_argument("quantile_index: need at least one score");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("quantile_index: delta must lie in (0, 1)");
  const double x = (1.0 - delta) * (static_cast<double>(count) + 1.0);
  const double nearest = std::round(x);
  if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, x)) return static_cast<long>(nearest);
  return static_cast<long>(std::ceil(x));
}

ConformalReport certify(const std::vector<double>& scores, double delta) {
  ConformalReport r;
  r.scores = scores;
  r.sorted = scores;
  r.delta = delta;
  std::stable_sort(r.sorted.begin(), r.sorted.end());
  const int count = static_cast<int>(scores.size());
  r.index = quantile_index(count, delta);
  std::ostringstream msg;
  msg << std::setprecision(6);
  if (r.index > count) {
    r.vacuous = true;
    r.quantile = kInf;
    msg << "vacuous: l = " << r.index << " exceeds H = " << count << " at delta = " << delta
        << "; more rollouts are needed for this confidence level";
  } else {
    r.vacuous = false;
    r.quantile = r.sorted[static_cast<std::size_t>(r.index - 1)];
    msg << "P[s(tau_new) <= " << r.quantile << "] >= " << 1.0 - delta << " (H = " << count << ", l = " << r.index
        << ", q = s_(" << r.index << "))";
    if (r.quantile == 0.0)
      msg << "; a new rollout stays in every safe set and ends in the target with confidence "
          << 100.0 * (1.0 - delta) << "%";
  }
  r.statement = msg.str();
  return r;
}

std::string geometry_hash(const SafeSetSequence& safe) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  };
  feed(safe.margin);
  for (const Box& b : safe.boxes) {
    for (Eigen::Index i = 0; i < b.dim(); ++i) feed(b.lower()(i));
    for (Eigen::Index i = 0; i < b.dim(); ++i) feed(b.upper()(i));
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace safetrack
