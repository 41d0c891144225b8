#include "safetrack/brs.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace safetrack {

Vec linearization_error(const std::vector<Mat>& hessian_bounds, const Vec& rx, const Vec& ru) {
  Vec r(rx.size() + ru.size());
  r << rx, ru;
  Vec e(static_cast<Eigen::Index>(hessian_bounds.size()));
  for (std::size_t i = 0; i < hessian_bounds.size(); ++i) {
    if (hessian_bounds[i].rows() != r.size() || hessian_bounds[i].cols() != r.size())
      throw DimensionError("linearization_error: Hessian bound has the wrong size");
    e(static_cast<Eigen::Index>(i)) = 0.5 * r.dot(hessian_bounds[i] * r);
  }
  return e;
}

Vec linearization_error(const DynamicsModel& model, const Box& tx, const Box& tu) {
  return linearization_error(hessian_bounds(model, tx, tu), tx.radius(), tu.radius());
}

LinearizationStep linearize(const DynamicsModel& model, const Vec& x_nom, const Vec& u_nom, const Box& tx,
                            const Box& tu) {
  LinearizationStep s;
  s.a = model.jacobian_x(x_nom, u_nom);
  s.b = model.jacobian_u(x_nom, u_nom);
  s.c = model.step(x_nom, u_nom) - s.a * x_nom - s.b * u_nom;
  // Taylor remainder about the nominal point: radii are the farthest reach.
  const Vec rx = (tx.upper() - x_nom).cwiseMax(x_nom - tx.lower()).cwiseMax(0.0);
  const Vec ru = (tu.upper() - u_nom).cwiseMax(u_nom - tu.lower()).cwiseMax(0.0);
  s.e = linearization_error(hessian_bounds(model, tx, tu), rx, ru);
  const Vec half = model.disturbance().radius() + s.e;
  s.err_set = Box(-half, half);
  return s;
}

bool conservative_linearization_check(const LinearizationStep& step, const DynamicsModel& model, const Box& tx,
                                      const Box& tu, int samples, std::uint64_t seed) {
  auto ok = [&](const Vec& x, const Vec& u) {
    const Vec gap = (model.step(x, u) - (step.a * x + step.b * u + step.c)).cwiseAbs();
    return (gap.array() <= step.e.array() * (1.0 + 1e-9) + 1e-12).all();
  };
  for (const Vec& x : tx.vertices())
    for (const Vec& u : tu.vertices())
      if (!ok(x, u)) return false;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec x(tx.dim());
  Vec u(tu.dim());
  for (int s = 0; s < samples; ++s) {
    for (int i = 0; i < x.size(); ++i) x(i) = tx.lower()(i) + unit(rng) * (tx.upper()(i) - tx.lower()(i));
    for (int i = 0; i < u.size(); ++i) u(i) = tu.lower()(i) + unit(rng) * (tu.upper()(i) - tu.lower()(i));
    if (!ok(x, u)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Tubes

namespace {

std::vector<AxisRole> resolve_roles(const TubeParams& params, int n) {
  if (params.roles.empty()) {
    std::vector<AxisRole> roles(static_cast<std::size_t>(n), AxisRole::kSeparating);
    if (n == 3) roles[2] = AxisRole::kNonSeparating;
    return roles;
  }
  if (static_cast<int>(params.roles.size()) != n) throw DimensionError("tube params: one role per state axis");
  return params.roles;
}

}  // namespace

Tubes initial_tubes(const DynamicsModel& model, const ProblemSpec& spec, const NominalTrajectory& traj,
                    const TubeParams& params) {
  const int horizon = traj.horizon();
  const int n = model.state_dim();
  const auto roles = resolve_roles(params, n);
  Tubes t;
  for (int k = 0; k < horizon; ++k) {
    const Vec& x = traj.states[static_cast<std::size_t>(k)];
    Vec r = params.state_fraction * clearance_radii(spec, x, params.margin, roles);
    for (Eigen::Index i = 0; i < params.max_state_radius.size(); ++i)
      if (params.max_state_radius(i) > 0.0 && r(i) > 0.0) r(i) = std::min(r(i), params.max_state_radius(i));
    if (!(r.array() > 0.0).all()) {
      std::ostringstream msg;
      msg << "state tube at k=" << k << " has no clearance (radii " << r.transpose() << ")";
      throw TubeError(msg.str(), k);
    }
    Box tube = Box::centered(x, r);
    if (!separated_from_unsafe(tube, spec, roles))
      throw TubeError("state tube at k=" + std::to_string(k) + " touches the unsafe set", k);
    t.x.push_back(std::move(tube));
  }
  const Vec& xn = traj.states.back();
  Vec rn = params.state_fraction * (xn - spec.target.lower()).cwiseMin(spec.target.upper() - xn);
  for (Eigen::Index i = 0; i < params.max_state_radius.size(); ++i)
    if (params.max_state_radius(i) > 0.0 && rn(i) > 0.0) rn(i) = std::min(rn(i), params.max_state_radius(i));
  if (!(rn.array() > 0.0).all()) throw TubeError("terminal state is not interior to the target", horizon);
  t.x.push_back(Box::centered(xn, rn));
  for (int k = 0; k < horizon; ++k) {
    const Vec& u = traj.inputs[static_cast<std::size_t>(k)];
    const Vec ru = params.input_fraction * (u - spec.inputs.lower()).cwiseMin(spec.inputs.upper() - u);
    if ((ru.array() < 0.0).any()) throw TubeError("nominal input outside U at k=" + std::to_string(k), k);
    t.u.push_back(Box::centered(u, ru));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Backward recursion

namespace {

struct StepSets {
  Zonotope lambda;
  Zonotope deflated;
  Zonotope psi;
  Zonotope z;
  Vec e;
};

// One backward step with fixed tubes; throws EmptySetError.
StepSets brs_step(const DynamicsModel& model, const NominalTrajectory& traj, int k, const Zonotope& next_deflated,
                  const Box& tx, const Box& tu, double gamma) {
  const Vec& xk = traj.states[static_cast<std::size_t>(k)];
  const Vec& uk = traj.inputs[static_cast<std::size_t>(k)];
  const LinearizationStep lin = linearize(model, xk, uk, tx, tu);
  StepSets s;
  s.e = lin.e;
  s.psi = minkowski_diff_under(next_deflated, lin.e);
  const Zonotope input_part(-(lin.c + lin.b * tu.center()), -lin.b * tu.radius().asDiagonal());
  const Mat a_inv = invert(lin.a, "A at k=" + std::to_string(k));
  const Zonotope z = linear_map(a_inv, minkowski_sum(s.psi, input_part)).pruned();
  // The exact center is x~_k because x~_{k+1} = A x~_k + B u~_k + c.
  s.z = Zonotope(xk, z.generators());
  const double alpha = shrink_factor(s.z, tx);
  if (!(alpha > 1e-12)) throw EmptySetError("state tube leaves no room for the backward set");
  s.lambda = shrink_generators_into_box(s.z, tx);
  s.deflated = minkowski_diff_under(s.lambda, gamma * model.disturbance().radius());
  return s;
}

// Largest t with t * [-w, w] inside the zonotope about its center: how many
// disturbance boxes the set can still absorb.
double absorb_margin(const Zonotope& z, const Vec& w) {
  double gauge = 0.0;
  for (const Vec& v : Box::centered(Vec::Zero(w.size()), w).vertices()) {
    gauge = std::max(gauge, zonotope_gauge(z.generators(), v));
    if (!std::isfinite(gauge)) return 0.0;
  }
  return gauge > 0.0 ? 1.0 / gauge : kInf;
}

double log_volume(const Zonotope& z) {
  const Vec r = interval_hull(z).radius();
  double v = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) v += std::log(std::max(r(i), 1e-300));
  return v;
}

void check_inputs(const DynamicsModel& model, const NominalTrajectory& traj, double gamma) {
  if (traj.horizon() < 1) throw std::invalid_argument("BRS: trajectory horizon must be at least 1");
  if (traj.state_dim() != model.state_dim() || traj.input_dim() != model.input_dim())
    throw DimensionError("BRS: trajectory dimensions do not match the model");
  if (!(gamma >= 1.0)) throw std::invalid_argument("BRS: disturbance inflation gamma must be >= 1");
}

BrsResult start_result(const DynamicsModel& model, const NominalTrajectory& traj, const Box& terminal_tube,
                       double gamma) {
  const int horizon = traj.horizon();
  BrsResult r;
  r.gamma = gamma;
  r.lambda.resize(static_cast<std::size_t>(horizon + 1));
  r.deflated.resize(static_cast<std::size_t>(horizon + 1));
  r.psi.resize(static_cast<std::size_t>(horizon));
  r.errors.resize(static_cast<std::size_t>(horizon));
  r.tubes_x.resize(static_cast<std::size_t>(horizon + 1));
  r.tubes_u.resize(static_cast<std::size_t>(horizon));
  const Vec& xn = traj.states.back();
  const Vec rn = (terminal_tube.upper() - xn).cwiseMin(xn - terminal_tube.lower()).cwiseMax(0.0);
  r.tubes_x.back() = terminal_tube;
  r.lambda.back() = Zonotope(xn, Mat(rn.asDiagonal())).pruned();
  try {
    r.deflated.back() = minkowski_diff_under(r.lambda.back(), gamma * model.disturbance().radius());
  } catch (const EmptySetError& err) {
    throw BrsError(std::string("empty set at k=") + std::to_string(horizon) + ": " + err.what(), horizon, {});
  }
  return r;
}

}  // namespace

BrsResult compute_brs(const DynamicsModel& model, const NominalTrajectory& traj, const Tubes& tubes, double gamma) {
  check_inputs(model, traj, gamma);
  const int horizon = traj.horizon();
  if (static_cast<int>(tubes.x.size()) != horizon + 1 || static_cast<int>(tubes.u.size()) != horizon)
    throw DimensionError("compute_brs: tube count does not match the horizon");
  BrsResult r = start_result(model, traj, tubes.x.back(), gamma);
  for (int k = horizon - 1; k >= 0; --k) {
    const auto ks = static_cast<std::size_t>(k);
    try {
      StepSets s = brs_step(model, traj, k, r.deflated[ks + 1], tubes.x[ks], tubes.u[ks], gamma);
      r.lambda[ks] = std::move(s.lambda);
      r.deflated[ks] = std::move(s.deflated);
      r.psi[ks] = std::move(s.psi);
      r.errors[ks] = std::move(s.e);
    } catch (const std::exception& err) {
      throw BrsError(std::string("empty set at k=") + std::to_string(k) + ": " + err.what(), k, r.trace);
    }
    r.tubes_x[ks] = tubes.x[ks];
    r.tubes_u[ks] = tubes.u[ks];
  }
  return r;
}

BrsResult synthesize_brs(const DynamicsModel& model, const ProblemSpec& spec, const NominalTrajectory& traj,
                         const TubeParams& params, double gamma) {
  check_inputs(model, traj, gamma);
  if (params.budget < 1 || !(params.shrink > 0.0 && params.shrink < 1.0))
    throw std::invalid_argument("synthesize_brs: need budget >= 1 and shrink in (0, 1)");
  const Tubes init = initial_tubes(model, spec, traj, params);
  const int horizon = traj.horizon();
  BrsResult r = start_result(model, traj, init.x.back(), gamma);
  for (int k = horizon - 1; k >= 0; --k) {
    const auto ks = static_cast<std::size_t>(k);
    const Vec& xk = traj.states[ks];
    const Vec& uk = traj.inputs[ks];
    const Vec rx0 = init.x[ks].radius();
    const Vec ru0 = init.u[ks].radius();
    const Mat a_inv = invert(model.jacobian_x(xk, uk), "A at k=" + std::to_string(k));
    const Mat b = model.jacobian_u(xk, uk);
    const Zonotope next_shape(Vec::Zero(xk.size()), r.deflated[ks + 1].generators());
    bool found = false;
    double best_score = -kInf;
    double best_margin = -kInf;
    StepSets best;
    Box best_tx;
    Box best_tu;
    int best_level = -1;
    std::ostringstream attempts;
    for (int level = 0; level < params.budget; ++level) {
      const Vec ru = std::pow(params.shrink, level) * ru0;
      const Box tu = Box::centered(uk, ru);
      // Z_k lies inside A^-1 (Lambda~_{k+1} + B T_u) about x~_k, so the state
      // tube starts at that hull.
      const Zonotope input_part(Vec::Zero(xk.size()), b * ru.asDiagonal());
      const Zonotope reach = linear_map(a_inv, minkowski_sum(next_shape, input_part));
      Vec rx = rx0.cwiseMin(interval_hull(reach).radius() * (1.0 + 1e-9)).cwiseMax(1e-12);
      for (int pass = 0; pass <= params.tightening_passes; ++pass) {
        const Box tx = Box::centered(xk, rx);
        StepSets s;
        try {
          s = brs_step(model, traj, k, r.deflated[ks + 1], tx, tu, gamma);
        } catch (const std::exception& err) {
          attempts << " [level " << level << " pass " << pass << ": " << err.what() << "]";
          break;
        }
        const double margin = absorb_margin(s.deflated, model.disturbance().radius());
        const double score = log_volume(s.lambda);
        if (margin > best_margin * (1.0 + 1e-9) || (margin >= best_margin * (1.0 - 1e-9) && score > best_score)) {
          best_margin = margin;
          best_score = score;
          best = s;
          best_tx = tx;
          best_tu = tu;
          best_level = level;
          found = true;
        }
        const Vec next = rx.cwiseMin(interval_hull(s.z).radius()).cwiseMin(rx0);
        if ((rx - next).lpNorm<Eigen::Infinity>() <= 1e-9 * rx.lpNorm<Eigen::Infinity>()) break;
        rx = next.cwiseMax(1e-12);
      }
    }
    if (!found) {
      r.trace.push_back("k=" + std::to_string(k) + ": no feasible tube level;" + attempts.str());
      throw BrsError("empty set at k=" + std::to_string(k) + " after " + std::to_string(params.budget) +
                         " tube levels",
                     k, r.trace);
    }
    std::ostringstream line;
    line << "k=" << k << ": input level " << best_level << ", margin " << best_margin << ", log-volume " << best_score
         << ", tube_x radius ["
         << best_tx.radius().transpose() << "], e [" << best.e.transpose() << "], hull radius ["
         << interval_hull(best.lambda).radius().transpose() << "]";
    r.trace.push_back(line.str());
    r.lambda[ks] = std::move(best.lambda);
    r.deflated[ks] = std::move(best.deflated);
    r.psi[ks] = std::move(best.psi);
    r.errors[ks] = std::move(best.e);
    r.tubes_x[ks] = best_tx;
    r.tubes_u[ks] = best_tu;
  }
  return r;
}

Tubes refine_tubes(const DynamicsModel& model, const ProblemSpec& spec, const NominalTrajectory& traj,
                   const TubeParams& params, double gamma) {
  const BrsResult r = synthesize_brs(model, spec, traj, params, gamma);
  return {r.tubes_x, r.tubes_u};
}

std::vector<Mat> deflated_pseudoinverses(const BrsResult& brs) {
  std::vector<Mat> out;
  out.reserve(brs.deflated.size());
  for (const Zonotope& z : brs.deflated) out.push_back(pseudoinverse(z.generators()));
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint
//
//   brs <N> <gamma>
//   step <k>        (k = 0..N, each followed by its records)
//   tube_x box, [tube_u box, psi zonotope, error row], lambda zonotope, deflated zonotope

void save_brs(const BrsResult& brs, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const int horizon = brs.horizon();
  os << "brs " << horizon << ' ' << format_double(brs.gamma) << '\n';
  for (int k = 0; k <= horizon; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    os << "step " << k << '\n';
    write_record(os, brs.tubes_x[ks]);
    if (k < horizon) {
      write_record(os, brs.tubes_u[ks]);
      write_record(os, brs.psi[ks]);
      os << "error";
      for (Eigen::Index i = 0; i < brs.errors[ks].size(); ++i) os << ' ' << format_double(brs.errors[ks](i));
      os << '\n';
    }
    write_record(os, brs.lambda[ks]);
    write_record(os, brs.deflated[ks]);
  }
}

BrsResult load_brs(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  RecordReader reader(is);
  auto head = reader.expect_tokens("brs header");
  if (head.size() != 3 || head[0] != "brs") throw ParseError("expected 'brs <N> <gamma>'", reader.line());
  const long horizon = reader.parse_int(head[1]);
  if (horizon < 1) throw ParseError("horizon must be positive", reader.line());
  BrsResult r;
  r.gamma = reader.parse_double(head[2]);
  for (long k = 0; k <= horizon; ++k) {
    auto step = reader.expect_tokens("step header");
    if (step.size() != 2 || step[0] != "step" || reader.parse_int(step[1]) != k)
      throw ParseError("expected 'step " + std::to_string(k) + "'", reader.line());
    r.tubes_x.push_back(reader.read_box());
    if (k < horizon) {
      r.tubes_u.push_back(reader.read_box());
      r.psi.push_back(reader.read_zonotope());
      auto err = reader.expect_tokens("error row");
      if (err.empty() || err[0] != "error") throw ParseError("expected 'error' row", reader.line());
      r.errors.push_back(reader.parse_vector(err, 1, err.size() - 1));
    }
    r.lambda.push_back(reader.read_zonotope());
    r.deflated.push_back(reader.read_zonotope());
  }
  return r;
}

}  // namespace safetrack
