#include "safetrack/rollout.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace safetrack {

NetworkController::NetworkController(std::vector<StepNet> nets, Box inputs)
    : nets_(std::move(nets)), inputs_(std::move(inputs)) {
  for (std::size_t k = 0; k < nets_.size(); ++k)
    if (nets_[k].step() != static_cast<int>(k)) throw std::invalid_argument("NetworkController: nets out of order");
}

Vec NetworkController::control(int k, const Vec& x) const {
  return nets_.at(static_cast<std::size_t>(k)).forward_trimmed(x, inputs_);
}

BaselineController::BaselineController(const DynamicsModel& model, const NominalTrajectory& traj,
                                       const BrsResult& brs, BaselineParams params)
    : model_(model), tubes_u_(brs.tubes_u), params_(params) {
  const std::vector<Mat> pinv = deflated_pseudoinverses(brs);
  for (int k = 0; k < brs.horizon(); ++k)
    targets_.push_back({&model, traj.states[static_cast<std::size_t>(k) + 1], pinv[static_cast<std::size_t>(k) + 1]});
}

Vec BaselineController::control(int k, const Vec& x) const {
  const auto ks = static_cast<std::size_t>(k);
  return baseline_control(model_, x, tubes_u_.at(ks), targets_.at(ks), params_).u;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t rollout_seed(std::uint64_t base, std::uint64_t index) { return splitmix64(base + index); }

Trajectory rollout(const Controller& controller, const Vec& x0, const Box& disturbance, const DynamicsModel& model,
                   int horizon, std::uint64_t seed) {
  if (!x0.allFinite()) throw RolloutError("rollout: initial state is not finite", 0);
  if (horizon > controller.horizon()) throw std::invalid_argument("rollout: controller horizon too short");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec lo = disturbance.lower();
  const Vec width = disturbance.upper() - disturbance.lower();
  Trajectory t;
  t.seed = seed;
  t.states.push_back(x0);
  for (int k = 0; k < horizon; ++k) {
    const Vec& x = t.states.back();
    Vec u = controller.control(k, x);
    Vec w(lo.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = lo(i) + unit(rng) * width(i);
    Vec next = model.step(x, u) + w;
    if (!next.allFinite()) throw RolloutError("rollout: non-finite state at k=" + std::to_string(k + 1), k + 1);
    t.inputs.push_back(std::move(u));
    t.disturbances.push_back(std::move(w));
    t.states.push_back(std::move(next));
  }
  return t;
}

Trajectory replay(const Trajectory& stored, const Controller& controller, const Box& disturbance,
                  const DynamicsModel& model) {
  return rollout(controller, stored.states.front(), disturbance, model, stored.horizon(), stored.seed);
}

Vec initial_state(const Zonotope& lambda0, double sigma, std::uint64_t seed) {
  if (sigma < -1.0) throw std::invalid_argument("initial_state: scale below -1");
  const Zonotope scaled(lambda0.center(), (1.0 + sigma) * lambda0.generators());
  return sample(scaled, 1, SampleMode::kUniform, splitmix64(seed)).front();
}

std::vector<Trajectory> batch_rollouts(const Controller& controller, const Zonotope& lambda0, double sigma, int count,
                                       const Box& disturbance, const DynamicsModel& model, int horizon,
                                       std::uint64_t base_seed, int workers) {
  if (count < 1) throw std::invalid_argument("batch_rollouts: need at least one rollout");
  std::vector<Trajectory> out(static_cast<std::size_t>(count));
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::string error;
  int error_step = 0;
  std::mutex mu;
  auto work = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        const std::uint64_t seed = rollout_seed(base_seed, static_cast<std::uint64_t>(i));
        out[static_cast<std::size_t>(i)] =
            rollout(controller, initial_state(lambda0, sigma, seed), disturbance, model, horizon, seed);
      } catch (const RolloutError& e) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failed.exchange(true)) {
          error = "rollout " + std::to_string(i) + ": " + e.what();
          error_step = e.step();
        }
        next = count;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min(std::max(workers, 1), count); ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (failed) throw RolloutError(error, error_step);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

void write_rollouts_csv(const std::vector<Trajectory>& trajs, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  if (trajs.empty()) return;
  const auto n = trajs.front().states.front().size();
  const auto m = trajs.front().inputs.empty() ? 0 : trajs.front().inputs.front().size();
  os << "rollout,seed,k";
  for (Eigen::Index i = 0; i < n; ++i) os << ",x" << i + 1;
  for (Eigen::Index i = 0; i < m; ++i) os << ",u" << i + 1;
  for (Eigen::Index i = 0; i < n; ++i) os << ",w" << i + 1;
  os << '\n';
  for (std::size_t r = 0; r < trajs.size(); ++r) {
    const Trajectory& t = trajs[r];
    for (std::size_t k = 0; k < t.states.size(); ++k) {
      os << r << ',' << t.seed << ',' << k;
      for (Eigen::Index i = 0; i < n; ++i) os << ',' << format_double(t.states[k](i));
      const bool last = k + 1 == t.states.size();
      for (Eigen::Index i = 0; i < m; ++i) os << ',' << (last ? "" : format_double(t.inputs[k](i)));
      for (Eigen::Index i = 0; i < n; ++i) os << ',' << (last ? "" : format_double(t.disturbances[k](i)));
      os << '\n';
    }
  }
}

std::vector<Trajectory> read_rollouts_csv(const std::filesystem::path& path, int state_dim, int input_dim) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  int line_no = 0;
  if (!std::getline(is, line)) throw ParseError("missing CSV header", 1);
  ++line_no;
  const std::size_t fields = 3 + static_cast<std::size_t>(2 * state_dim + input_dim);
  std::vector<Trajectory> out;
  std::istringstream dummy;
  RecordReader numbers(dummy);
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != fields) throw ParseError("expected " + std::to_string(fields) + " fields", line_no);
    auto num = [&](const std::string& s) {
      try {
        return numbers.parse_double(s);
      } catch (const ParseError&) {
        throw ParseError("malformed number '" + s + "'", line_no);
      }
    };
    auto integer = [&](const std::string& s) -> unsigned long long {
      try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw ParseError("malformed integer '" + s + "'", line_no);
      }
    };
    const auto r = integer(cells[0]);
    const auto k = integer(cells[2]);
    if (r == out.size()) {
      if (k != 0) throw ParseError("rollout must start at k=0", line_no);
      out.emplace_back();
      out.back().seed = integer(cells[1]);
    } else if (r + 1 != out.size()) {
      throw ParseError("rollout ids must be consecutive", line_no);
    }
    Trajectory& t = out.back();
    if (k != t.states.size()) throw ParseError("steps must be consecutive", line_no);
    Vec x(state_dim);
    for (int i = 0; i < state_dim; ++i) x(i) = num(cells[3 + static_cast<std::size_t>(i)]);
    t.states.push_back(std::move(x));
    const std::size_t u0 = 3 + static_cast<std::size_t>(state_dim);
    const std::size_t w0 = u0 + static_cast<std::size_t>(input_dim);
    if (cells[u0].empty()) continue;  // terminal row
    Vec u(input_dim);
    Vec w(state_dim);
    for (int i = 0; i < input_dim; ++i) u(i) = num(cells[u0 + static_cast<std::size_t>(i)]);
    for (int i = 0; i < state_dim; ++i) w(i) = num(cells[w0 + static_cast<std::size_t>(i)]);
    t.inputs.push_back(std::move(u));
    t.disturbances.push_back(std::move(w));
  }
  for (const Trajectory& t : out)
    if (t.states.size() != t.inputs.size() + 1) throw ParseError("rollout without a terminal row", line_no);
  return out;
}

}  // namespace safetrack
