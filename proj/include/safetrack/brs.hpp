#pragma once

// Conservative linearization along a nominal trajectory and the backward
// recursion of zonotopic reachable sets.

#include "safetrack/nominal.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace safetrack {

/// Affine model A x + B u + c of f around (x~, u~) with the error half-widths
/// e valid over the tube pair it was built for.
struct LinearizationStep {
  Mat a;
  Mat b;
  Vec c;
  Vec e;
  /// W + [-e, e].
  Box err_set;
};

/// e_i = 1/2 [r_x; r_u]^T H_i [r_x; r_u] with H_i the interval bound of the
/// Hessian of f_i over tx x tu.
Vec linearization_error(const DynamicsModel& model, const Box& tx, const Box& tu);
/// Same quadratic form with caller-supplied bounds.
Vec linearization_error(const std::vector<Mat>& hessian_bounds, const Vec& rx, const Vec& ru);

LinearizationStep linearize(const DynamicsModel& model, const Vec& x_nom, const Vec& u_nom, const Box& tx,
                            const Box& tu);

/// Samples (x, u) in tx x tu (corners included) and checks
/// |f(x,u) - (A x + B u + c)| <= e element-wise.
bool conservative_linearization_check(const LinearizationStep& step, const DynamicsModel& model, const Box& tx,
                                      const Box& tu, int samples, std::uint64_t seed);

struct Tubes {
  std::vector<Box> x;  ///< N + 1 state tubes
  std::vector<Box> u;  ///< N input tubes
};

struct TubeParams {
  double state_fraction = 0.9;
  double input_fraction = 0.5;
  /// Per-axis cap on the state-tube radius; entries <= 0 leave that axis
  /// uncapped. Empty means no cap.
  Vec max_state_radius;
  /// Margin and axis roles of the clearance boxes the state tubes are cut from.
  double margin = 0.01;
  std::vector<AxisRole> roles;
  /// Input-tube scale ladder: level j uses shrink^j, j < budget.
  double shrink = 0.7;
  int budget = 20;
  /// State-tube tightening passes per ladder level.
  int tightening_passes = 4;
};

class TubeError : public std::runtime_error {
 public:
  TubeError(const std::string& what, int step) : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Symmetric tubes: state radius state_fraction * clearance_radii at each
/// k < N, state_fraction * distance to the target faces at N, and
/// input radius input_fraction * distance from u~ to the faces of U. State
/// radii are then capped by max_state_radius.
/// Throws TubeError when a tube has no clearance or touches an unsafe piece.
Tubes initial_tubes(const DynamicsModel& model, const ProblemSpec& spec, const NominalTrajectory& traj,
                    const TubeParams& params);

/// Empty set at some step of the backward pass.
class BrsError : public EmptySetError {
 public:
  BrsError(const std::string& what, int step, std::vector<std::string> trace)
      : EmptySetError(what), step_(step), trace_(std::move(trace)) {}
  int step() const { return step_; }
  const std::vector<std::string>& trace() const { return trace_; }

 private:
  int step_;
  std::vector<std::string> trace_;
};

struct BrsResult {
  std::vector<Zonotope> lambda;    ///< Lambda_0 .. Lambda_N
  std::vector<Zonotope> deflated;  ///< Lambda~_0 .. Lambda~_N
  std::vector<Zonotope> psi;       ///< Psi_0 .. Psi_{N-1}
  std::vector<Box> tubes_x;        ///< N + 1
  std::vector<Box> tubes_u;        ///< N
  std::vector<Vec> errors;         ///< e_0 .. e_{N-1}
  double gamma = 1.0;
  std::vector<std::string> trace;

  int horizon() const { return static_cast<int>(tubes_u.size()); }
};

/// Backward pass with fixed tubes. Lambda_N = tube_x[N]; for k = N-1..0:
///   Psi_k    = Lambda~_{k+1} - [-e_k, e_k]
///   Z_k      = A_k^{-1} (Psi_k + (-(c_k + B_k T_u,k)))
///   Lambda_k = Z_k shrunk into tube_x[k]
/// and Lambda~_k = Lambda_k - gamma W. Throws BrsError naming the step.
BrsResult compute_brs(const DynamicsModel& model, const NominalTrajectory& traj, const Tubes& tubes, double gamma);

/// Backward pass that chooses the tubes step by step: for each k it walks the
/// input-scale ladder, tightens the state tube towards the hull of Z_k, and
/// keeps the candidate whose Lambda~_k absorbs the largest multiple of W,
/// breaking ties by the log-volume of interval_hull(Lambda_k).
/// Throws BrsError with the attempt trace when no level works at some k.
BrsResult synthesize_brs(const DynamicsModel& model, const ProblemSpec& spec, const NominalTrajectory& traj,
                         const TubeParams& params, double gamma);

/// Tubes chosen by synthesize_brs.
Tubes refine_tubes(const DynamicsModel& model, const ProblemSpec& spec, const NominalTrajectory& traj,
                   const TubeParams& params, double gamma);

/// Pseudoinverses of the deflated generators, G~_k^dagger for k = 0..N.
std::vector<Mat> deflated_pseudoinverses(const BrsResult& brs);

void save_brs(const BrsResult& brs, const std::filesystem::path& path);
BrsResult load_brs(const std::filesystem::path& path);

}  // namespace safetrack
