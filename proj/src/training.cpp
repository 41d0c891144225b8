#include "safetrack/controller.hpp"

#include "safetrack/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace safetrack {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double mean_inf_norm(const StepNet& net, const StepTarget& target, const std::vector<Vec>& points, double* within) {
  double sum = 0.0;
  int inside = 0;
  for (const Vec& x : points) {
    const double s = tracking_coordinates(net, target, x).lpNorm<Eigen::Infinity>();
    sum += s;
    if (s <= 1.0) ++inside;
  }
  if (within) *within = points.empty() ? 1.0 : static_cast<double>(inside) / static_cast<double>(points.size());
  return points.empty() ? 0.0 : sum / static_cast<double>(points.size());
}

void validate_config(const TrainConfig& cfg) {
  if (cfg.uniform_samples < 0 || cfg.extreme_samples < 0 || cfg.uniform_samples + cfg.extreme_samples < 2)
    throw std::invalid_argument("train: need at least two samples");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
    throw std::invalid_argument("train: train_fraction must lie in (0, 1)");
  if (!(cfg.learning_rate > 0.0) || cfg.weight_decay < 0.0 || cfg.validation_period < 1 || cfg.patience < 1 ||
      cfg.max_epochs < 0)
    throw std::invalid_argument("train: invalid optimizer settings");
}

}  // namespace

TrainedStep train_step_controller(int k, const DynamicsModel& model, const NominalTrajectory& traj,
                                  const BrsResult& brs, const Mat& next_pinv, const TrainConfig& cfg,
                                  std::uint64_t seed) {
  validate_config(cfg);
  if (k < 0 || k >= traj.horizon()) throw std::out_of_range("train: step index outside the horizon");
  const auto ks = static_cast<std::size_t>(k);
  std::mt19937_64 rng(seed);

  // Training data from Lambda_k: factor-uniform and factor-extreme points.
  const Zonotope& lambda = brs.lambda[ks];
  std::vector<Vec> points = sample(lambda, cfg.uniform_samples, SampleMode::kUniform, rng());
  for (Vec& x : sample(lambda, cfg.extreme_samples, SampleMode::kExtreme, rng())) points.push_back(std::move(x));
  std::shuffle(points.begin(), points.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::lround(cfg.train_fraction * static_cast<double>(points.size())));
  const std::vector<Vec> train(points.begin(), points.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<Vec> val(points.begin() + static_cast<std::ptrdiff_t>(n_train), points.end());

  StepTarget target{&model, traj.states[ks + 1], next_pinv};
  TrainedStep out{StepNet(k, traj.states[ks], traj.inputs[ks], cfg.hidden), TrainLog{}};
  StepNet& net = out.net;
  TrainLog& log = out.log;
  log.step = k;
  net.initialize(rng(), cfg.scale_init_fraction * brs.tubes_u[ks].radius());

  const KernelTable& kt = active_kernels();
  std::vector<double>& p = net.params();
  std::vector<double> grad(p.size(), 0.0);
  std::vector<double> m1(p.size(), 0.0);
  std::vector<double> m2(p.size(), 0.0);
  AdamCoeffs coeffs;
  coeffs.lr = cfg.learning_rate;
  coeffs.weight_decay = cfg.weight_decay;

  double best = mean_inf_norm(net, target, val, nullptr);
  log.initial_validation = best;
  log.best_validation = best;
  log.validations.emplace_back(0, best);
  std::vector<double> best_params = p;
  int stale = 0;
  double pow1 = 1.0;
  double pow2 = 1.0;
  int epoch = 0;
  while (epoch < cfg.max_epochs) {
    ++epoch;
    const LossValue loss = step_loss_gradient(net, target, train, cfg.loss, grad);
    if (!std::isfinite(loss.total)) {
      std::ostringstream msg;
      msg << "training step " << k << ": non-finite loss at epoch " << epoch << " (P1 " << loss.tracking << ", P2 "
          << loss.scale << ")";
      throw TrainingError(msg.str());
    }
    pow1 *= coeffs.beta1;
    pow2 *= coeffs.beta2;
    coeffs.bias1 = 1.0 - pow1;
    coeffs.bias2 = 1.0 - pow2;
    kt.adam(p.data(), grad.data(), m1.data(), m2.data(), p.size(), coeffs);
    if (epoch % cfg.validation_period != 0) continue;
    const double v = mean_inf_norm(net, target, val, nullptr);
    log.validations.emplace_back(epoch, v);
    if (v < best) {
      best = v;
      best_params = p;
      log.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  p = best_params;
  log.epochs = epoch;
  log.best_validation = best;
  mean_inf_norm(net, target, val, &log.validation_within);
  return out;
}

std::vector<TrainedStep> train_all(const DynamicsModel& model, const NominalTrajectory& traj, const BrsResult& brs,
                                   const TrainConfig& cfg, std::uint64_t seed, int workers) {
  const int horizon = traj.horizon();
  if (static_cast<int>(brs.lambda.size()) != horizon + 1) throw DimensionError("train: BRS horizon mismatch");
  const std::vector<Mat> pinv = deflated_pseudoinverses(brs);
  std::vector<TrainedStep> out(static_cast<std::size_t>(horizon));
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::string first_error;
  auto work = [&] {
    for (int k = next++; k < horizon; k = next++) {
      try {
        const auto ks = static_cast<std::size_t>(k);
        out[ks] = train_step_controller(k, model, traj, brs, pinv[ks + 1], cfg,
                                        mix(seed ^ mix(static_cast<std::uint64_t>(k))));
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error.empty()) first_error = e.what();
        next = horizon;
      }
    }
  };
  const int threads = std::clamp(workers, 1, std::max(horizon, 1));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (!first_error.empty()) throw TrainingError(first_error);
  return out;
}

}  // namespace safetrack
