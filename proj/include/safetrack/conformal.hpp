#pragma once

// Forward safe boxes around the nominal states, trajectory scores, and the
// split-conformal quantile certificate.

#include "safetrack/rollout.hpp"

#include <string>
#include <vector>

namespace safetrack {

struct SafeSetSequence {
  std::vector<Box> boxes;  ///< S_0 .. S_{N-1}
  std::vector<Vec> plus;   ///< r_k^+
  std::vector<Vec> minus;  ///< r_k^-
  double margin = 0.0;
  std::vector<AxisRole> roles;
};

class SafeSetError : public std::runtime_error {
 public:
  SafeSetError(const std::string& what, int step, int axis)
      : std::runtime_error(what), step_(step), axis_(axis) {}
  int step() const { return step_; }
  int axis() const { return axis_; }

 private:
  int step_;
  int axis_;
};

/// S_k = [x~_k - r_k^-, x~_k + r_k^+] for k < N. Throws SafeSetError naming
/// (k, j) on a negative radius, or (k, -1) when S_k is not kept apart from
/// every unsafe piece by a separating axis.
SafeSetSequence build_safe_sets(const NominalTrajectory& traj, const ProblemSpec& spec, double margin,
                                const std::vector<AxisRole>& roles);

struct Score {
  std::vector<double> steps;  ///< s_0 .. s_N
  double total = 0.0;
};

/// s_k = dist(x_k, S_k) for k < N, s_N = dist(x_N, X_t), total = sum.
Score score(const std::vector<Vec>& states, const SafeSetSequence& safe, const Box& target);

/// l = ceil((1 - delta)(H + 1)), with products within 1e-9 of an integer
/// snapped to it before rounding up.
long quantile_index(int count, double delta);

struct ConformalReport {
  std::vector<double> scores;
  std::vector<double> sorted;
  double delta = 0.0;
  long index = 0;  ///< l
  double quantile = kInf;
  bool vacuous = true;
  std::string statement;
};

/// Sorts (stably) and reads off q = s_(l); vacuous with q = +inf when l > H.
ConformalReport certify(const std::vector<double>& scores, double delta);

/// Stable hex digest of the safe-set geometry (FNV-1a over the boxes).
std::string geometry_hash(const SafeSetSequence& safe);

}  // namespace safetrack
