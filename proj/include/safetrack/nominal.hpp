#pragma once

#include "safetrack/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace safetrack {

/// Disturbance-free state/input sequence: states x0..xN, inputs u0..u(N-1).
struct NominalTrajectory {
  std::vector<Vec> states;
  std::vector<Vec> inputs;

  int horizon() const { return static_cast<int>(inputs.size()); }
  int state_dim() const { return states.empty() ? 0 : static_cast<int>(states.front().size()); }
  int input_dim() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().size()); }
};

enum class ViolationKind {
  kShape,
  kDynamicsResidual,
  kInputBounds,
  kOperatingDomain,
  kUnsafe,
  kInitialSet,
  kTerminalSet,
};

struct Violation {
  ViolationKind kind;
  int step = -1;
  int piece = -1;  ///< unsafe piece index for kUnsafe
  std::string message;
};

struct ValidateOptions {
  double dynamics_tolerance = 1e-9;
  /// Strict-interior margin for the operating domain and target checks.
  double interior_margin = 0.0;
};

/// Checks every nominal condition; an empty result means the trajectory is
/// a valid certificate.
std::vector<Violation> validate(const NominalTrajectory& traj, const ProblemSpec& spec, const DynamicsModel& model,
                                const ValidateOptions& options = {});

class PlanningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PlannerParams {
  int max_iterations = 20000;
  double goal_bias = 0.1;
  /// Number of sampling periods an input from the grid is held per extension.
  int hold_steps = 4;
  /// Finite set of candidate inputs; empty means "derive from the model".
  std::vector<Vec> input_grid;
  /// Interior margins w.r.t. the operating domain (per coordinate).
  Vec interior_margin;
  /// Inflation of every unsafe piece during planning (per coordinate).
  Vec obstacle_clearance;
  /// How far inside the target the terminal state must lie (per coordinate).
  Vec goal_depth;
  /// Weights of the nearest-neighbour metric (per coordinate).
  Vec metric_weights;
  /// Optional extra admissibility test applied to every planned state.
  std::function<bool(const Vec&)> state_filter;
};

/// Fills unset planner fields with the defaults for `model`.
PlannerParams resolve_planner_params(PlannerParams params, const DynamicsModel& model, const ProblemSpec& spec);

/// Forward kinodynamic RRT over piecewise-constant inputs from a finite grid,
/// started at the center of the initial set. The trajectory is cut at the
/// first state that lies goal_depth-deep inside the target. Deterministic in
/// `seed`; throws PlanningError when the iteration budget runs out.
NominalTrajectory plan_rrt(const ProblemSpec& spec, const DynamicsModel& model, std::uint64_t seed,
                           const PlannerParams& params = {});

/// Text format: header "n m N", then N+1 state rows, then N input rows.
void save_trajectory(const NominalTrajectory& traj, const std::filesystem::path& path);
void write_trajectory(std::ostream& os, const NominalTrajectory& traj);
/// Throws ParseError (with line number) on malformed input and DimensionError
/// when the header disagrees with the expected dimensions (if given).
NominalTrajectory load_trajectory(const std::filesystem::path& path, std::optional<int> expected_n = std::nullopt,
                                  std::optional<int> expected_m = std::nullopt);
NominalTrajectory read_trajectory(std::istream& is, std::optional<int> expected_n = std::nullopt,
                                  std::optional<int> expected_m = std::nullopt);

}  // namespace safetrack
