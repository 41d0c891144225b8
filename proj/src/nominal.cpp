#include "safetrack/nominal.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace safetrack {

std::vector<Violation> validate(const NominalTrajectory& traj, const ProblemSpec& spec, const DynamicsModel& model,
                                const ValidateOptions& options) {
  std::vector<Violation> out;
  const int n = model.state_dim();
  const int m = model.input_dim();
  const int horizon = traj.horizon();
  if (horizon < 1 || static_cast<int>(traj.states.size()) != horizon + 1) {
    out.push_back({ViolationKind::kShape, -1, -1, "trajectory needs N >= 1 inputs and N + 1 states"});
    return out;
  }
  for (int k = 0; k <= horizon; ++k) {
    if (traj.states[static_cast<std::size_t>(k)].size() != n ||
        (k < horizon && traj.inputs[static_cast<std::size_t>(k)].size() != m)) {
      out.push_back({ViolationKind::kShape, k, -1, "wrong state or input dimension at k=" + std::to_string(k)});
      return out;
    }
  }
  const Vec margin = Vec::Constant(n, options.interior_margin);
  if (!spec.initial.contains(traj.states.front()))
    out.push_back({ViolationKind::kInitialSet, 0, -1, "initial state outside the initial set"});
  for (int k = 0; k < horizon; ++k) {
    const Vec& x = traj.states[static_cast<std::size_t>(k)];
    const Vec& u = traj.inputs[static_cast<std::size_t>(k)];
    const double residual = (traj.states[static_cast<std::size_t>(k + 1)] - model.step(x, u)).lpNorm<Eigen::Infinity>();
    if (!(residual <= options.dynamics_tolerance)) {
      std::ostringstream msg;
      msg << "dynamics residual at k=" << k << " (" << residual << ")";
      out.push_back({ViolationKind::kDynamicsResidual, k, -1, msg.str()});
    }
    if (!spec.inputs.contains(u))
      out.push_back({ViolationKind::kInputBounds, k, -1, "input outside U at k=" + std::to_string(k)});
    if (!spec.operating.contains_interior(x, margin))
      out.push_back({ViolationKind::kOperatingDomain, k, -1, "state not interior to X_o at k=" + std::to_string(k)});
    for (std::size_t i = 0; i < spec.unsafe.pieces.size(); ++i) {
      if (spec.unsafe.pieces[i].contains(x))
        out.push_back({ViolationKind::kUnsafe, k, static_cast<int>(i),
                       "state inside unsafe piece " + std::to_string(i) + " at k=" + std::to_string(k)});
    }
  }
  if (!spec.target.contains_interior(traj.states.back(), margin))
    out.push_back({ViolationKind::kTerminalSet, horizon, -1, "terminal state not interior to the target set"});
  return out;
}

PlannerParams resolve_planner_params(PlannerParams p, const DynamicsModel& model, const ProblemSpec& spec) {
  const int n = model.state_dim();
  const int m = model.input_dim();
  if (p.input_grid.empty()) {
    if (model.name() == "dubins") {
      // Speed 0 turns in place, which lets the path hop across thin bands
      // of the state filter.
      for (double speed : {0.0, 1.0, 2.0, 3.0})
        for (double turn : {-4.0, -2.0, 0.0, 2.0, 4.0})
          if (speed != 0.0 || turn != 0.0) p.input_grid.push_back((Vec(2) << speed, turn).finished());
    } else {
      // Corners and center of U.
      p.input_grid.push_back(spec.inputs.center());
      for (const Vec& v : spec.inputs.vertices()) p.input_grid.push_back(v);
    }
  }
  for (const Vec& u : p.input_grid) {
    if (u.size() != m || !spec.inputs.contains(u)) throw std::invalid_argument("planner: input grid entry outside U");
  }
  auto fill = [n](Vec& v, const Vec& def) {
    if (v.size() == 0) v = def;
    if (v.size() != n) throw DimensionError("planner: per-coordinate parameter has wrong dimension");
  };
  if (model.name() == "dubins") {
    fill(p.interior_margin, (Vec(3) << 0.02, 0.02, 0.05).finished());
    fill(p.obstacle_clearance, (Vec(3) << 0.1, 0.1, 0.0).finished());
    fill(p.goal_depth, (Vec(3) << 0.1, 0.1, 0.1).finished());
    fill(p.metric_weights, (Vec(3) << 1.0, 1.0, 0.3).finished());
  } else {
    fill(p.interior_margin, Vec::Constant(n, 0.02));
    fill(p.obstacle_clearance, Vec::Constant(n, 0.0));
    fill(p.goal_depth, Vec::Constant(n, 0.0));
    fill(p.metric_weights, Vec::Ones(n));
  }
  if (p.hold_steps < 1) throw std::invalid_argument("planner: hold_steps must be positive");
  return p;
}

namespace {

struct TreeNode {
  Vec state;
  int parent = -1;
  int input = -1;  // index into the grid; -1 for the root
  int steps = 0;   // steps taken from the parent
};

class Planner {
 public:
  Planner(const ProblemSpec& spec, const DynamicsModel& model, const PlannerParams& params)
      : spec_(spec), model_(model), p_(params) {
    for (const Box& piece : spec_.unsafe.pieces)
      inflated_.push_back(Box(piece.lower() - p_.obstacle_clearance, piece.upper() + p_.obstacle_clearance));
    Vec lo = spec_.target.lower() + p_.goal_depth;
    Vec hi = spec_.target.upper() - p_.goal_depth;
    if ((lo.array() > hi.array()).any()) throw PlanningError("planner: goal depth exceeds the target half-width");
    goal_ = Box(lo, hi);
  }

  bool valid(const Vec& x) const {
    if (!x.allFinite() || !spec_.operating.contains_interior(x, p_.interior_margin)) return false;
    for (const Box& b : inflated_)
      if (b.contains(x)) return false;
    return !p_.state_filter || p_.state_filter(x);
  }
  bool in_goal(const Vec& x) const { return goal_.contains_interior(x, Vec::Zero(x.size())); }
  const Box& goal() const { return goal_; }

  double metric(const Vec& a, const Vec& b) const { return (a - b).cwiseProduct(p_.metric_weights).squaredNorm(); }

 private:
  const ProblemSpec& spec_;
  const DynamicsModel& model_;
  const PlannerParams& p_;
  std::vector<Box> inflated_;
  Box goal_;
};

Vec uniform_in(const Box& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec x(b.dim());
  for (int i = 0; i < b.dim(); ++i) x(i) = b.lower()(i) + unit(rng) * (b.upper()(i) - b.lower()(i));
  return x;
}

}  // namespace

NominalTrajectory plan_rrt(const ProblemSpec& spec, const DynamicsModel& model, std::uint64_t seed,
                           const PlannerParams& raw_params) {
  const PlannerParams p = resolve_planner_params(raw_params, model, spec);
  Planner planner(spec, model, p);
  const Vec start = spec.initial.center();
  if (!planner.valid(start)) throw PlanningError("planner: start state violates the state constraints");

  NominalTrajectory traj;
  traj.states.push_back(start);

  // A start that is already deep in the target only needs one step that stays there.
  if (planner.in_goal(start)) {
    const Vec u0 = spec.inputs.clamp(Vec::Zero(model.input_dim()));
    const Vec x1 = model.step(start, u0);
    if (planner.valid(x1) && planner.in_goal(x1)) {
      traj.inputs.push_back(u0);
      traj.states.push_back(x1);
      return traj;
    }
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<TreeNode> tree;
  tree.push_back({start, -1, -1, 0});

  auto rebuild = [&](int leaf, int input, int steps) {
    // Chain of (node, input, steps) from the root to the goal-reaching extension.
    std::vector<std::pair<int, int>> segments;  // (input, steps)
    segments.emplace_back(input, steps);
    for (int v = leaf; tree[static_cast<std::size_t>(v)].parent >= 0; v = tree[static_cast<std::size_t>(v)].parent)
      segments.emplace_back(tree[static_cast<std::size_t>(v)].input, tree[static_cast<std::size_t>(v)].steps);
    Vec x = start;
    for (auto it = segments.rbegin(); it != segments.rend(); ++it) {
      const Vec& u = p.input_grid[static_cast<std::size_t>(it->first)];
      for (int s = 0; s < it->second; ++s) {
        x = model.step(x, u);
        traj.inputs.push_back(u);
        traj.states.push_back(x);
      }
    }
  };

  for (int iter = 0; iter < p.max_iterations; ++iter) {
    const Vec target = unit(rng) < p.goal_bias ? uniform_in(planner.goal(), rng) : uniform_in(spec.operating, rng);
    std::size_t nearest = 0;
    double best = kInf;
    for (std::size_t i = 0; i < tree.size(); ++i) {
      const double d = planner.metric(tree[i].state, target);
      if (d < best) {
        best = d;
        nearest = i;
      }
    }
    // Each input is held for up to hold_steps periods; the longest valid
    // prefix is the candidate.
    int best_input = -1;
    int best_steps = 0;
    double best_dist = kInf;
    Vec best_state;
    for (std::size_t ui = 0; ui < p.input_grid.size(); ++ui) {
      Vec x = tree[nearest].state;
      Vec last;
      int steps = 0;
      for (int s = 0; s < p.hold_steps; ++s) {
        x = model.step(x, p.input_grid[ui]);
        if (!planner.valid(x)) break;
        if (planner.in_goal(x)) {
          rebuild(static_cast<int>(nearest), static_cast<int>(ui), s + 1);
          return traj;
        }
        last = x;
        steps = s + 1;
      }
      if (steps == 0) continue;
      const double d = planner.metric(last, target);
      if (d < best_dist) {
        best_dist = d;
        best_input = static_cast<int>(ui);
        best_steps = steps;
        best_state = last;
      }
    }
    if (best_input >= 0) tree.push_back({best_state, static_cast<int>(nearest), best_input, best_steps});
  }
  throw PlanningError("planner: iteration budget of " + std::to_string(p.max_iterations) +
                      " exhausted without reaching the target");
}

// ---------------------------------------------------------------------------
// I/O

void write_trajectory(std::ostream& os, const NominalTrajectory& traj) {
  os << traj.state_dim() << ' ' << traj.input_dim() << ' ' << traj.horizon() << '\n';
  auto row = [&](const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << format_double(v(i));
    os << '\n';
  };
  for (const Vec& x : traj.states) row(x);
  for (const Vec& u : traj.inputs) row(u);
}

void save_trajectory(const NominalTrajectory& traj, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_trajectory(os, traj);
}

NominalTrajectory read_trajectory(std::istream& is, std::optional<int> expected_n, std::optional<int> expected_m) {
  RecordReader reader(is);
  auto head = reader.expect_tokens("header 'n m N'");
  if (head.size() != 3) throw ParseError("header must be 'n m N'", reader.line());
  const long n = reader.parse_int(head[0]);
  const long m = reader.parse_int(head[1]);
  const long horizon = reader.parse_int(head[2]);
  if (n < 1 || m < 1 || horizon < 1) throw ParseError("header values must be positive", reader.line());
  if ((expected_n && n != *expected_n) || (expected_m && m != *expected_m)) {
    std::ostringstream msg;
    msg << "trajectory dimensions " << n << "x" << m << " do not match the model (" << expected_n.value_or(-1) << "x"
        << expected_m.value_or(-1) << ")";
    throw DimensionError(msg.str());
  }
  NominalTrajectory traj;
  for (long k = 0; k <= horizon; ++k)
    traj.states.push_back(reader.parse_vector(reader.expect_tokens("state row"), 0, static_cast<std::size_t>(n)));
  for (long k = 0; k < horizon; ++k)
    traj.inputs.push_back(reader.parse_vector(reader.expect_tokens("input row"), 0, static_cast<std::size_t>(m)));
  if (!reader.next_tokens().empty()) throw ParseError("trailing data after the last input row", reader.line());
  return traj;
}

NominalTrajectory load_trajectory(const std::filesystem::path& path, std::optional<int> expected_n,
                                  std::optional<int> expected_m) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_trajectory(is, expected_n, expected_m);
}

}  // namespace safetrack
