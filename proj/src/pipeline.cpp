#include "safetrack/pipeline.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

namespace safetrack {

namespace fs = std::filesystem;

std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char ch : stage) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  return splitmix64(seed ^ h);
}

int resolved_workers(const ExperimentConfig& cfg) {
  if (cfg.workers > 0) return cfg.workers;
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

PlannerParams planner_params(const ExperimentConfig& cfg) {
  PlannerParams params = cfg.planner;
  const ProblemSpec spec = cfg.problem;
  const double margin = cfg.margin;
  const double min_radius = cfg.min_safe_radius;
  const std::vector<AxisRole> roles = cfg.roles;
  params.state_filter = [spec, margin, min_radius, roles](const Vec& x) {
    const SafeRadii r = safe_box_radii(spec, x, margin, roles);
    if (std::min(r.plus.minCoeff(), r.minus.minCoeff()) < min_radius) return false;
    return separated_from_unsafe(Box(x - r.minus, x + r.plus), spec, roles);
  };
  return params;
}

NominalTrajectory run_plan(const ExperimentConfig& cfg, const DynamicsModel& model) {
  const std::vector<std::string> issues = check_problem(cfg.problem);
  if (!issues.empty()) {
    std::string msg = "inconsistent problem geometry:";
    for (const auto& s : issues) msg += "\n  " + s;
    throw PlanningError(msg);
  }
  return plan_rrt(cfg.problem, model, stage_seed(cfg.seed, "plan"), planner_params(cfg));
}

BrsResult run_brs(const ExperimentConfig& cfg, const DynamicsModel& model, const NominalTrajectory& traj) {
  return synthesize_brs(model, cfg.problem, traj, cfg.tubes, cfg.gamma);
}

std::vector<TrainedStep> run_train(const ExperimentConfig& cfg, const DynamicsModel& model,
                                   const NominalTrajectory& traj, const BrsResult& brs) {
  return train_all(model, traj, brs, cfg.training, stage_seed(cfg.seed, "train"), resolved_workers(cfg));
}

std::vector<Trajectory> run_rollouts(const ExperimentConfig& cfg, const DynamicsModel& model, const BrsResult& brs,
                                     const Controller& controller, double sigma, int count) {
  return batch_rollouts(controller, brs.lambda.front(), sigma, count, simulation_disturbance(cfg), model,
                        brs.horizon(), stage_seed(cfg.seed, "rollout"), resolved_workers(cfg));
}

SafeSetSequence run_safe_sets(const ExperimentConfig& cfg, const NominalTrajectory& traj) {
  return build_safe_sets(traj, cfg.problem, cfg.margin, cfg.roles);
}

std::vector<double> trajectory_scores(const std::vector<Trajectory>& trajs, const SafeSetSequence& safe,
                                      const Box& target) {
  std::vector<double> out;
  out.reserve(trajs.size());
  for (const Trajectory& t : trajs) out.push_back(score(t.states, safe, target).total);
  return out;
}

// ---------------------------------------------------------------------------
// File stages

namespace {

using Clock = std::chrono::steady_clock;

std::ostream& log_of(const StageContext& ctx) {
  static std::ostringstream sink;
  return ctx.log ? *ctx.log : sink;
}

fs::path need(const StageContext& ctx, const char* name, const std::string& producer) {
  const fs::path p = ctx.out / name;
  if (!fs::exists(p)) throw MissingArtifactError(p, producer);
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::map<std::string, double> read_timings(const fs::path& out) {
  std::map<std::string, double> t;
  std::ifstream is(out / artifacts::kTimings);
  std::string stage;
  double seconds = 0.0;
  while (is >> stage >> seconds) t[stage] = seconds;
  return t;
}

const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> order{"plan", "brs", "train", "rollout", "certify", "report"};
  return order;
}

void record_timing(const StageContext& ctx, const std::string& stage, Clock::time_point start) {
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  auto t = read_timings(ctx.out);
  t[stage] = seconds;
  std::ostringstream os;
  for (const auto& name : stage_order())
    if (t.count(name)) os << name << ' ' << std::fixed << std::setprecision(3) << t[name] << '\n';
  write_text(ctx.out / artifacts::kTimings, os.str());
  log_of(ctx) << stage << ": " << std::fixed << std::setprecision(2) << seconds << " s\n";
}

void prepare(const StageContext& ctx) {
  fs::create_directories(ctx.out);
  write_text(ctx.out / artifacts::kConfig, emit_config(ctx.config));
}

void write_nominal_csv(const NominalTrajectory& traj, const fs::path& path) {
  std::ostringstream os;
  os << "k";
  for (int i = 0; i < traj.state_dim(); ++i) os << ",x" << i + 1;
  for (int i = 0; i < traj.input_dim(); ++i) os << ",u" << i + 1;
  os << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    os << k;
    for (int i = 0; i < traj.state_dim(); ++i) os << ',' << format_double(traj.states[k](i));
    const bool last = k == traj.inputs.size();
    for (int i = 0; i < traj.input_dim(); ++i) os << ',' << (last ? "" : format_double(traj.inputs[k](i)));
    os << '\n';
  }
  write_text(path, os.str());
}

struct Loaded {
  std::unique_ptr<DynamicsModel> model;
  NominalTrajectory traj;
  BrsResult brs;
};

Loaded load_upstream(const StageContext& ctx, bool with_brs) {
  Loaded l;
  l.model = make_model(ctx.config);
  l.traj = load_trajectory(need(ctx, artifacts::kNominal, "plan"), l.model->state_dim(), l.model->input_dim());
  if (with_brs) {
    l.brs = load_brs(need(ctx, artifacts::kBrs, "brs"));
    if (l.brs.horizon() != l.traj.horizon())
      throw std::runtime_error("brs.txt does not match nominal.txt; rerun brs");
  }
  return l;
}

std::vector<StepNet> load_nets(const StageContext& ctx) {
  const fs::path dir = ctx.out / artifacts::kControllers;
  if (!fs::exists(dir / "manifest.txt")) throw MissingArtifactError(dir / "manifest.txt", "train");
  return load_controllers(dir);
}

nlohmann::json certificate_json(const ConformalReport& r, const SafeSetSequence& safe, const ExperimentConfig& cfg,
                                const std::vector<Trajectory>& trajs) {
  nlohmann::json j;
  j["H"] = r.scores.size();
  j["delta"] = r.delta;
  j["l"] = r.index;
  j["vacuous"] = r.vacuous;
  j["q"] = r.vacuous ? nlohmann::json(nullptr) : nlohmann::json(r.quantile);
  j["statement"] = r.statement;
  j["scores"] = r.scores;
  std::vector<std::uint64_t> seeds;
  for (const auto& t : trajs) seeds.push_back(t.seed);
  j["seeds"] = seeds;
  j["zero_scores"] = std::count(r.scores.begin(), r.scores.end(), 0.0);
  j["safe_set_hash"] = geometry_hash(safe);
  j["sampling"] = {
      {"scheme",
       "independent rollouts; x0 factor-uniform on the scaled initial set, disturbance uniform per coordinate"},
      {"sigma", cfg.sigma},
      {"disturbance_half_widths", std::vector<double>(cfg.sim_disturbance.data(),
                                                      cfg.sim_disturbance.data() + cfg.sim_disturbance.size())},
      {"base_seed", stage_seed(cfg.seed, "rollout")},
  };
  return j;
}

}  // namespace

void stage_plan(const StageContext& ctx) {
  const auto start = Clock::now();
  prepare(ctx);
  const auto model = make_model(ctx.config);
  const NominalTrajectory traj = run_plan(ctx.config, *model);
  save_trajectory(traj, ctx.out / artifacts::kNominal);
  write_nominal_csv(traj, ctx.out / artifacts::kNominalCsv);
  log_of(ctx) << "plan: horizon N = " << traj.horizon() << '\n';
  record_timing(ctx, "plan", start);
}

void stage_brs(const StageContext& ctx) {
  const auto start = Clock::now();
  prepare(ctx);
  Loaded l = load_upstream(ctx, false);
  try {
    const BrsResult brs = run_brs(ctx.config, *l.model, l.traj);
    save_brs(brs, ctx.out / artifacts::kBrs);
    std::ostringstream os;
    for (const auto& line : brs.trace) os << line << '\n';
    write_text(ctx.out / artifacts::kBrsTrace, os.str());
    log_of(ctx) << "brs: " << brs.lambda.size() << " sets, Lambda_0 order " << brs.lambda.front().order() << '\n';
  } catch (const BrsError& e) {
    std::ostringstream os;
    for (const auto& line : e.trace()) os << line << '\n';
    write_text(ctx.out / artifacts::kBrsTrace, os.str());
    throw;
  }
  record_timing(ctx, "brs", start);
}

void stage_train(const StageContext& ctx) {
  const auto start = Clock::now();
  prepare(ctx);
  Loaded l = load_upstream(ctx, true);
  const std::vector<TrainedStep> trained = run_train(ctx.config, *l.model, l.traj, l.brs);
  std::vector<StepNet> nets;
  std::ostringstream csv;
  std::ostringstream summary;
  csv << "step,epoch,validation\n";
  summary << "step,epochs,best_epoch,initial_validation,best_validation,validation_within\n";
  for (const TrainedStep& t : trained) {
    nets.push_back(t.net);
    for (const auto& [epoch, value] : t.log.validations)
      csv << t.log.step << ',' << epoch << ',' << format_double(value) << '\n';
    summary << t.log.step << ',' << t.log.epochs << ',' << t.log.best_epoch << ','
            << format_double(t.log.initial_validation) << ',' << format_double(t.log.best_validation) << ','
            << format_double(t.log.validation_within) << '\n';
  }
  fs::remove_all(ctx.out / artifacts::kControllers);
  save_controllers(nets, ctx.out / artifacts::kControllers);
  write_text(ctx.out / artifacts::kTrainingLog, csv.str());
  write_text(ctx.out / artifacts::kTrainingSummary, summary.str());
  log_of(ctx) << "train: " << nets.size() << " step controllers\n";
  record_timing(ctx, "train", start);
}

void stage_rollout(const StageContext& ctx) {
  const auto start = Clock::now();
  prepare(ctx);
  Loaded l = load_upstream(ctx, true);
  const NetworkController controller(load_nets(ctx), ctx.config.problem.inputs);
  if (controller.horizon() != l.traj.horizon())
    throw std::runtime_error("controllers do not match nominal.txt; rerun train");
  const auto trajs = run_rollouts(ctx.config, *l.model, l.brs, controller, ctx.config.sigma, ctx.config.rollouts);
  write_rollouts_csv(trajs, ctx.out / artifacts::kRollouts);
  log_of(ctx) << "rollout: " << trajs.size() << " trajectories (sigma = " << ctx.config.sigma << ")\n";
  record_timing(ctx, "rollout", start);
}

void stage_certify(const StageContext& ctx) {
  const auto start = Clock::now();
  prepare(ctx);
  Loaded l = load_upstream(ctx, false);
  const fs::path rollouts = need(ctx, artifacts::kRollouts, "rollout");
  const auto trajs = read_rollouts_csv(rollouts, l.traj.state_dim(), l.traj.input_dim());
  if (trajs.empty()) throw std::runtime_error("rollouts.csv holds no trajectories; rerun rollout");
  for (const auto& t : trajs)
    if (t.horizon() != l.traj.horizon())
      throw std::runtime_error("rollouts.csv does not match nominal.txt; rerun rollout");
  const SafeSetSequence safe = run_safe_sets(ctx.config, l.traj);
  const ConformalReport r = certify(trajectory_scores(trajs, safe, ctx.config.problem.target), ctx.config.delta);
  write_text(ctx.out / artifacts::kCertificateJson, certificate_json(r, safe, ctx.config, trajs).dump(2) + "\n");
  write_text(ctx.out / artifacts::kCertificateText, r.statement + "\n");
  log_of(ctx) << "certify: " << r.statement << '\n';
  record_timing(ctx, "certify", start);
}

void stage_report(const StageContext& ctx) {
  const auto start = Clock::now();
  prepare(ctx);
  Loaded l = load_upstream(ctx, true);
  const fs::path cert_path = need(ctx, artifacts::kCertificateJson, "certify");
  const auto cert = nlohmann::json::parse(read_text(cert_path));
  const auto trajs = read_rollouts_csv(need(ctx, artifacts::kRollouts, "rollout"), l.traj.state_dim(),
                                       l.traj.input_dim());
  const SafeSetSequence safe = run_safe_sets(ctx.config, l.traj);
  const std::vector<double> scores = trajectory_scores(trajs, safe, ctx.config.problem.target);
  write_figures(ctx.out / artifacts::kFigures, ctx.config, l.traj, l.brs, safe, trajs, scores);

  record_timing(ctx, "report", start);
  std::ostringstream os;
  os << "experiment: " << ctx.config.name << " (model " << ctx.config.model << ", seed " << ctx.config.seed << ")\n";
  os << "horizon N: " << l.traj.horizon() << '\n';
  os << "start: ";
  for (Eigen::Index i = 0; i < l.traj.states.front().size(); ++i) os << (i ? " " : "") << l.traj.states.front()(i);
  os << '\n';
  const Box hull0 = interval_hull(l.brs.lambda.front());
  os << "Lambda_0 hull half-widths: " << hull0.radius().transpose() << '\n';
  os << "rollouts H: " << cert["H"].get<long>() << ", sigma " << ctx.config.sigma << '\n';
  os << "zero-score rollouts: " << cert["zero_scores"].get<long>() << '\n';
  os << "delta: " << cert["delta"].get<double>() << ", l = " << cert["l"].get<long>() << '\n';
  if (cert["vacuous"].get<bool>())
    os << "certificate: vacuous (q = inf)\n";
  else
    os << "certificate: q_" << 1.0 - cert["delta"].get<double>() << " = " << cert["q"].get<double>() << '\n';
  os << "statement: " << cert["statement"].get<std::string>() << '\n';
  os << "safe-set hash: " << cert["safe_set_hash"].get<std::string>() << '\n';
  os << "timings (s):\n";
  const auto timings = read_timings(ctx.out);
  for (const auto& stage : stage_order())
    if (timings.count(stage))
      os << "  " << stage << ' ' << std::fixed << std::setprecision(3) << timings.at(stage) << '\n';
  write_text(ctx.out / artifacts::kReport, os.str());
  log_of(ctx) << os.str();
}

void stage_all(const StageContext& ctx) {
  stage_plan(ctx);
  stage_brs(ctx);
  stage_train(ctx);
  stage_rollout(ctx);
  stage_certify(ctx);
  stage_report(ctx);
}

}  // namespace safetrack
