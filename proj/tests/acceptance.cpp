// End-to-end acceptance checks. Prints one "criterion N: PASS|FAIL ..." line
// per check and exits non-zero when any of them fails.

#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <numeric>

using namespace safetrack;
using namespace testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int failures = 0;

void report(int n, bool pass, const std::string& details) {
  if (!pass) ++failures;
  std::printf("criterion %d: %s  %s\n", n, pass ? "PASS" : "FAIL", details.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Unicycle written out independently of the library model.
Vec unicycle(const Vec& x, const Vec& u, double ts) {
  return vec({x(0) + ts * u(0) * std::cos(x(2)), x(1) + ts * u(0) * std::sin(x(2)), x(2) + ts * u(1)});
}

Vec unicycle_affine(const Vec& xn, const Vec& un, const Vec& x, const Vec& u, double ts) {
  const Vec dx = x - xn;
  const Vec du = u - un;
  const double c = std::cos(xn(2));
  const double s = std::sin(xn(2));
  Vec out = unicycle(xn, un, ts) + dx;
  out(0) += -ts * un(0) * s * dx(2) + ts * c * du(0);
  out(1) += ts * un(0) * c * dx(2) + ts * s * du(0);
  out(2) += ts * du(1);
  return out;
}

StepNet random_net(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> depth(1, 4);
  std::uniform_int_distribution<int> width(2, 32);
  std::vector<int> hidden(static_cast<std::size_t>(depth(rng)));
  for (int& h : hidden) h = width(rng);
  StepNet net(static_cast<int>(rng() % 50), uniform_in(box({0, 0, -1.5}, {5, 2, 1.5}), rng),
              uniform_in(box({0, -5}, {8, 5}), rng), hidden);
  net.initialize(rng(), uniform_in(box({0.05, 0.05}, {4, 4}), rng));
  std::normal_distribution<double> g(0.0, 0.3);
  for (const auto& b : net.blocks())
    if (b.cols == 1 && b.name != "scale")
      for (int i = 0; i < b.rows; ++i) net.params()[b.offset + static_cast<std::size_t>(i)] = g(rng);
  return net;
}

// Smallest s such that f(x, u) lands in c + s G B for some u in the tube.
// f is affine in u for the unicycle, so this is one LP over (u, b+, b-, s).
double membership_gauge(const DynamicsModel& model, const Vec& x, const Box& tu, const Zonotope& z) {
  const int n = z.dim();
  const int m = tu.dim();
  const int q = z.order();
  const int cols = m + 3 * q + 1;
  const int s_col = m + 2 * q;
  LinearProgram lp;
  lp.a = Mat::Zero(n + q, cols);
  lp.b = Vec::Zero(n + q);
  lp.c = Vec::Zero(cols);
  lp.c(s_col) = 1.0;
  lp.lower = Vec::Zero(cols);
  lp.upper = Vec::Constant(cols, kInf);
  lp.lower.head(m) = tu.lower();
  lp.upper.head(m) = tu.upper();
  const Vec f0 = model.step(x, Vec::Zero(m));
  lp.a.block(0, 0, n, m) = model.jacobian_u(x, Vec::Zero(m));
  lp.a.block(0, m, n, q) = -z.generators();
  lp.a.block(0, m + q, n, q) = z.generators();
  lp.b.head(n) = z.center() - f0;
  for (int i = 0; i < q; ++i) {
    lp.a(n + i, m + i) = 1.0;
    lp.a(n + i, m + q + i) = 1.0;
    lp.a(n + i, s_col) = -1.0;
    lp.a(n + i, s_col + 1 + i) = 1.0;
  }
  const LpResult r = solve_lp(lp);
  return r.status == LpStatus::kOptimal ? r.objective : kInf;
}

std::vector<Vec> mixed_samples(const Zonotope& z, int count, std::uint64_t seed) {
  auto xs = sample(z, count / 2, SampleMode::kUniform, seed);
  const auto ex = sample(z, count - count / 2, SampleMode::kExtreme, seed + 1);
  xs.insert(xs.end(), ex.begin(), ex.end());
  return xs;
}

// ---------------------------------------------------------------------------

void criterion1() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  const Box inputs = box({0, -5}, {8, 5});
  long bad_identity = 0, bad_band = 0, bad_trim = 0;
  for (int n = 0; n < 100; ++n) {
    const StepNet net = random_net(rng);
    if ((net.forward_raw(net.x_nom()) - net.u_nom()).cwiseAbs().maxCoeff() > 1e-9) ++bad_identity;
    const Vec r = net.scale().cwiseAbs();
    for (int i = 0; i < 10000; ++i) {
      const Vec x = net.x_nom() + uniform_in(box({-3, -3, -3}, {3, 3, 3}), rng);
      const Vec u = net.forward_raw(x);
      const Vec slack = r + 1e-12 * (Vec::Ones(2) + net.u_nom().cwiseAbs());
      if (((u - net.u_nom()).cwiseAbs().array() > slack.array()).any()) ++bad_band;
      const Vec t = net.forward_trimmed(x, inputs);
      if (!inputs.contains(t)) ++bad_trim;
    }
  }
  const double secs = seconds_since(start);
  report(1, bad_identity == 0 && bad_band == 0 && bad_trim == 0 && secs < 10.0,
         "identity " + std::to_string(bad_identity) + ", band " + std::to_string(bad_band) + ", trim " +
             std::to_string(bad_trim) + " violations over 100 nets x 1e4 inputs; " + fmt("%.2f s", secs));
}

void criterion2(const DefaultCase& c) {
  const auto start = Clock::now();
  const double ts = c.cfg.sampling_time;
  std::mt19937_64 rng(202);
  long violations = 0;
  double worst_ratio = 0.0;
  for (int k = 0; k < c.brs.horizon(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const Box& tx = c.brs.tubes_x[ks];
    const Box& tu = c.brs.tubes_u[ks];
    const Vec& e = c.brs.errors[ks];
    for (int i = 0; i < 10000; ++i) {
      const Vec x = uniform_in(tx, rng);
      const Vec u = uniform_in(tu, rng);
      const Vec gap = (unicycle(x, u, ts) - unicycle_affine(c.traj.states[ks], c.traj.inputs[ks], x, u, ts)).cwiseAbs();
      if (((gap.array() > e.array() + 1e-13)).any()) ++violations;
      for (int j = 0; j < 3; ++j)
        if (e(j) > 0) worst_ratio = std::max(worst_ratio, gap(j) / e(j));
    }
  }
  const double secs = seconds_since(start);
  report(2, violations == 0 && secs < 30.0,
         std::to_string(violations) + " violations over " + std::to_string(c.brs.horizon()) +
             " steps x 1e4 samples; largest |f - affine| / e = " + fmt("%.3f", worst_ratio) + "; " +
             fmt("%.2f s", secs));
}

// Every sample of the difference plus every vertex of the box lies in z.
long difference_violations(const Zonotope& z, const Vec& w, const Zonotope& d, std::uint64_t seed) {
  const std::vector<Vec> corners = Box(-w, w).vertices();
  long bad = 0;
  for (const Vec& p : mixed_samples(d, 1000, seed))
    for (const Vec& v : corners)
      if (!z.contains(p + v)) ++bad;
  return bad;
}

// Every sample of the shrunk set lies in z and in b.
long shrink_violations(const Zonotope& z, const Box& b, const Zonotope& s, std::uint64_t seed) {
  long bad = 0;
  const Vec tol = Vec::Constant(b.dim(), 1e-9);
  const Box loose(b.lower() - tol, b.upper() + tol);
  for (const Vec& p : mixed_samples(s, 1000, seed))
    if (!z.contains(p) || !loose.contains(p)) ++bad;
  return bad;
}

void criterion3(const DefaultCase& c) {
  const auto start = Clock::now();
  std::mt19937_64 rng(303);
  long diff_bad = 0, shrink_bad = 0;
  int diff_cases = 0, shrink_cases = 0;
  for (int t = 0; t < 20; ++t) {
    const int n = 2 + t % 2;
    const int q = n + 1 + static_cast<int>(rng() % 6);
    const Zonotope z = random_zonotope(n, q, rng);
    const Vec radius = z.generators().cwiseAbs().rowwise().sum();
    const Vec w = 0.15 * radius.cwiseProduct(uniform_in(Box(Vec::Zero(n), Vec::Ones(n)), rng));
    try {
      diff_bad += difference_violations(z, w, minkowski_diff_under(z, w), 10 + t);
      ++diff_cases;
    } catch (const EmptySetError&) {
    }
    const Vec off = 0.3 * radius.cwiseProduct(uniform_in(Box(-Vec::Ones(n), Vec::Ones(n)), rng));
    const Box b = Box::centered(z.center() + 0.2 * off, 0.6 * radius + off.cwiseAbs());
    shrink_bad += shrink_violations(z, b, shrink_generators_into_box(z, b), 50 + t);
    shrink_bad += shrink_violations(z, b, shrink_into_box(z, b), 90 + t);
    shrink_cases += 2;
  }
  // Instance cases: the differences and the shrink of the backward pass.
  const int horizon = c.brs.horizon();
  for (int k : {0, horizon / 4, horizon / 2, 3 * horizon / 4, horizon - 1}) {
    const auto ks = static_cast<std::size_t>(k);
    const Vec& e = c.brs.errors[ks];
    diff_bad += difference_violations(c.brs.deflated[ks + 1], e, minkowski_diff_under(c.brs.deflated[ks + 1], e),
                                      400 + k);
    const Vec gw = c.brs.gamma * c.model->disturbance().radius();
    diff_bad += difference_violations(c.brs.lambda[ks], gw, minkowski_diff_under(c.brs.lambda[ks], gw), 600 + k);
    diff_cases += 2;
    const LinearizationStep lin =
        linearize(*c.model, c.traj.states[ks], c.traj.inputs[ks], c.brs.tubes_x[ks], c.brs.tubes_u[ks]);
    const Zonotope pushed = minkowski_sum(c.brs.psi[ks].translated(-lin.c), linear_map(-lin.b, Zonotope::from_box(
                                                                                                 c.brs.tubes_u[ks])));
    const Zonotope zk = linear_map(invert(lin.a), pushed);
    shrink_bad += shrink_violations(zk, c.brs.tubes_x[ks], shrink_generators_into_box(zk, c.brs.tubes_x[ks]), 800 + k);
    ++shrink_cases;
  }
  const double secs = seconds_since(start);
  report(3, diff_bad == 0 && shrink_bad == 0 && diff_cases >= 20,
         "difference " + std::to_string(diff_bad) + " violations over " + std::to_string(diff_cases) +
             " cases, shrink " + std::to_string(shrink_bad) + " over " + std::to_string(shrink_cases) +
             " cases (1000 samples each); " + fmt("%.1f s", secs));
}

void criterion4(const DefaultCase& c) {
  const auto start = Clock::now();
  const auto pinv = deflated_pseudoinverses(c.brs);
  const int horizon = c.brs.horizon();
  long tried = 0, baseline_fail = 0, member_fail = 0;
  double worst_objective = 0.0, worst_gauge = 0.0;
  int worst_k = -1;
  for (int k = 0; k < horizon; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const StepTarget target{c.model.get(), c.traj.states[ks + 1], pinv[ks + 1]};
    for (const Vec& x : mixed_samples(c.brs.lambda[ks], 200, 1000 + static_cast<std::uint64_t>(k))) {
      ++tried;
      const BaselineResult r = baseline_control(*c.model, x, c.brs.tubes_u[ks], target);
      if (!r.success) {
        ++baseline_fail;
        if (r.objective > worst_objective) {
          worst_objective = r.objective;
          worst_k = k;
        }
      }
      const double g = membership_gauge(*c.model, x, c.brs.tubes_u[ks], c.brs.deflated[ks + 1]);
      worst_gauge = std::max(worst_gauge, g);
      if (g > 1.0 + 1e-9) ++member_fail;
    }
  }
  bool hull_in_target = c.cfg.problem.target.contains(interval_hull(c.brs.lambda.back()));
  int hulls_hitting = 0;
  for (const Zonotope& l : c.brs.lambda)
    if (c.cfg.problem.unsafe.intersects(interval_hull(l))) ++hulls_hitting;
  const double rate = 1.0 - static_cast<double>(baseline_fail) / static_cast<double>(tried);
  std::string details = "baseline success " + fmt("%.4f", rate) + " (" + std::to_string(baseline_fail) + "/" +
                        std::to_string(tried) + " fail";
  if (worst_k >= 0) details += ", worst objective " + fmt("%.3f", worst_objective) + " at k=" + std::to_string(worst_k);
  details += "); exact membership of f(x,u) in the next deflated set: " + std::to_string(member_fail) +
             " fail, largest gauge " + fmt("%.9f", worst_gauge) + "; hull(Lambda_N) in target: " +
             (hull_in_target ? "yes" : "no") + ", hulls meeting the unsafe set: " + std::to_string(hulls_hitting) +
             "; " + fmt("%.1f s", seconds_since(start));
  report(4, baseline_fail == 0 && hull_in_target && hulls_hitting == 0, details);
}

void criterion5() {
  const DubinsCar model(0.05, box({0, 0, 0}, {0, 0, 0}));
  std::mt19937_64 rng(505);
  long compared = 0, bad = 0, kinks = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const StepNet net = random_net(rng);
    const StepTarget target{&model, model.step(net.x_nom(), net.u_nom()), random_matrix(3, 3, rng, 4.0)};
    std::vector<Vec> batch;
    const Box offsets = box({-0.3, -0.3, -0.3}, {0.3, 0.3, 0.3});
    for (int i = 0; i < 12; ++i) batch.push_back(net.x_nom() + uniform_in(offsets, rng));
    const LossWeights w;
    std::vector<double> grad;
    step_loss_gradient(net, target, batch, w, grad);
    StepNet probe = net;
    auto loss_at = [&](std::size_t i, double v) {
      probe.params()[i] = v;
      return step_loss(probe, target, batch, w).total;
    };
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double p0 = net.params()[i];
      const double h = 1e-6;
      const double fd = (loss_at(i, p0 + h) - loss_at(i, p0 - h)) / (2 * h);
      const double fine = (loss_at(i, p0 + h / 8) - loss_at(i, p0 - h / 8)) / (h / 4);
      probe.params()[i] = p0;
      // A relu or max kink inside the stencil shows up as two disagreeing step sizes.
      if (std::abs(fd - fine) > 1e-5 * std::max(1.0, std::abs(fd))) {
        ++kinks;
        continue;
      }
      const double rel = std::abs(grad[i] - fd) / std::max({std::abs(fd), std::abs(grad[i]), 1e-3});
      worst = std::max(worst, rel);
      if (rel > 1e-4) ++bad;
      ++compared;
    }
  }
  report(5, bad == 0 && compared > 20 * kinks,
         std::to_string(bad) + " mismatches over " + std::to_string(compared) + " parameters on 10 nets (" +
             std::to_string(kinks) + " kink points skipped); worst relative error " + fmt("%.2e", worst));
}

struct Trained {
  std::unique_ptr<NetworkController> controller;
  SafeSetSequence safe;
};

Trained criterion6(const DefaultCase& c) {
  Trained out;
  ExperimentConfig cfg = c.cfg;
  cfg.delta = 0.05;
  const auto t_train = Clock::now();
  const std::vector<TrainedStep> trained = run_train(cfg, *c.model, c.traj, c.brs);
  const double train_secs = seconds_since(t_train);
  std::vector<StepNet> nets;
  double within = 0.0;
  double worst_within = 1.0;
  for (const TrainedStep& t : trained) {
    nets.push_back(t.net);
    within += t.log.validation_within;
    worst_within = std::min(worst_within, t.log.validation_within);
  }
  within /= static_cast<double>(trained.size());
  out.controller = std::make_unique<NetworkController>(std::move(nets), cfg.problem.inputs);
  out.safe = run_safe_sets(cfg, c.traj);

  const auto t_roll = Clock::now();
  const auto trajs = run_rollouts(cfg, *c.model, c.brs, *out.controller, 0.0, 200);
  const double per_rollout = seconds_since(t_roll) / 200.0;
  const auto scores = trajectory_scores(trajs, out.safe, cfg.problem.target);
  const long positive = std::count_if(scores.begin(), scores.end(), [](double s) { return s > 0.0; });
  const ConformalReport cert = certify(scores, cfg.delta);
  report(6, positive == 0 && !cert.vacuous && cert.quantile == 0.0 && train_secs <= 1800.0 && per_rollout <= 0.1,
         std::to_string(positive) + "/200 positive scores, q_0.95 = " + fmt("%g", cert.quantile) + " (l = " +
             std::to_string(cert.index) + "); training " + fmt("%.0f s", train_secs) + ", " +
             fmt("%.5f s", per_rollout) + " per rollout; pooled validation share with |d|_inf <= 1 " +
             fmt("%.3f", within) + " (lowest step " + fmt("%.3f", worst_within) + ")");
  return out;
}

void criterion7(const DefaultCase& c, const Trained& t) {
  const auto trajs = run_rollouts(c.cfg, *c.model, c.brs, *t.controller, 0.2, 200);
  const auto scores = trajectory_scores(trajs, t.safe, c.cfg.problem.target);
  const long zero = std::count(scores.begin(), scores.end(), 0.0);
  report(7, zero >= 190, std::to_string(zero) + "/200 rollouts with zero score at sigma = 0.2");
}

void criterion8(const DefaultCase& c, const Trained& t) {
  Vec probe = vec({1, 0.8, 0});
  bool moved = false;
  // Walk away from the nominal start until the probe is certified outside.
  for (double d = 0.2; c.brs.lambda[0].contains(probe) && d < 0.6; d += 0.01) {
    probe = c.traj.states[0] + vec({0, -d, 0});
    moved = true;
  }
  const auto pinv = deflated_pseudoinverses(c.brs);
  const StepTarget target{c.model.get(), c.traj.states[1], pinv[1]};
  const BaselineResult b = baseline_control(*c.model, probe, c.brs.tubes_u[0], target);
  const Trajectory tr = rollout(*t.controller, probe, Box(Vec::Zero(3), Vec::Zero(3)), *c.model, c.brs.horizon(), 0);
  const Score s = score(tr.states, t.safe, c.cfg.problem.target);
  const bool outside = !c.brs.lambda[0].contains(probe);
  const bool in_target = c.cfg.problem.target.contains(tr.states.back());
  char where[96];
  std::snprintf(where, sizeof where, "probe (%.2f, %.2f, %.2f)%s", probe(0), probe(1), probe(2),
                moved ? " (moved)" : "");
  report(8, outside && !b.success && b.objective > 1.0 && in_target && s.total == 0.0,
         std::string(where) + " outside Lambda_0: " + (outside ? "yes" : "no") + "; baseline objective " +
             fmt("%.3f", b.objective) + "; network rollout score " + fmt("%g", s.total) + ", ends in target: " +
             (in_target ? "yes" : "no"));
}

void criterion9() {
  std::mt19937_64 rng(909);
  std::uniform_int_distribution<int> count(1, 80);
  std::uniform_int_distribution<int> level(0, 5);
  const double deltas[] = {0.001, 0.01, 0.05, 0.1, 0.25, 0.5};
  long bad = 0, vacuous = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int h = count(rng);
    std::vector<double> s;
    for (int i = 0; i < h; ++i) s.push_back(0.1 * level(rng));
    const double delta = deltas[trial % 6];
    // Order statistics by repeated extraction of the minimum.
    std::vector<double> rest = s;
    std::vector<double> order;
    while (!rest.empty()) {
      const auto it = std::min_element(rest.begin(), rest.end());
      order.push_back(*it);
      rest.erase(it);
    }
    long l = 1;
    while (static_cast<double>(l) < (1.0 - delta) * (h + 1) - 1e-9) ++l;
    const ConformalReport r = certify(s, delta);
    if (r.index != l) ++bad;
    if (l > h) {
      ++vacuous;
      if (!r.vacuous || !std::isinf(r.quantile)) ++bad;
    } else if (r.vacuous || r.quantile != order[static_cast<std::size_t>(l - 1)]) {
      ++bad;
    }
  }
  const ConformalReport paper = certify(std::vector<double>(1000, 0.0), 0.001);
  const bool exact = quantile_index(1000, 0.001) == 1000 && paper.index == 1000 && paper.quantile == 0.0;
  report(9, bad == 0 && vacuous > 0 && exact,
         std::to_string(bad) + " mismatches over 1000 score sets (" + std::to_string(vacuous) +
             " vacuous); H = 1000, delta = 0.001 gives l = " + std::to_string(paper.index));
}

}  // namespace

int main() {
  try {
    criterion1();
    const DefaultCase& c = default_case();
    std::printf("instance: horizon N = %d\n", c.brs.horizon());
    criterion2(c);
    criterion3(c);
    criterion4(c);
    criterion5();
    const Trained t = criterion6(c);
    criterion7(c, t);
    criterion8(c, t);
    criterion9();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
