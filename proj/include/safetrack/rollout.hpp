#pragma once

// Closed-loop simulation x+ = f(x, u) + w with w uniform on a box.

#include "safetrack/controller.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace safetrack {

class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual int horizon() const = 0;
  virtual Vec control(int k, const Vec& x) const = 0;
};

/// Trimmed step networks.
class NetworkController final : public Controller {
 public:
  NetworkController(std::vector<StepNet> nets, Box inputs);
  std::string name() const override { return "network"; }
  int horizon() const override { return static_cast<int>(nets_.size()); }
  Vec control(int k, const Vec& x) const override;
  const std::vector<StepNet>& nets() const { return nets_; }

 private:
  std::vector<StepNet> nets_;
  Box inputs_;
};

/// Open-loop nominal inputs.
class NominalController final : public Controller {
 public:
  explicit NominalController(std::vector<Vec> inputs) : inputs_(std::move(inputs)) {}
  std::string name() const override { return "nominal"; }
  int horizon() const override { return static_cast<int>(inputs_.size()); }
  Vec control(int k, const Vec&) const override { return inputs_.at(static_cast<std::size_t>(k)); }

 private:
  std::vector<Vec> inputs_;
};

/// Optimization-based controller: baseline_control at every step, applying
/// its minimizer whether or not it succeeds.
class BaselineController final : public Controller {
 public:
  BaselineController(const DynamicsModel& model, const NominalTrajectory& traj, const BrsResult& brs,
                     BaselineParams params = {});
  std::string name() const override { return "baseline"; }
  int horizon() const override { return static_cast<int>(tubes_u_.size()); }
  Vec control(int k, const Vec& x) const override;

 private:
  const DynamicsModel& model_;
  std::vector<Box> tubes_u_;
  std::vector<StepTarget> targets_;
  BaselineParams params_;
};

struct Trajectory {
  std::vector<Vec> states;        ///< x_0 .. x_N
  std::vector<Vec> inputs;        ///< u_0 .. u_{N-1}
  std::vector<Vec> disturbances;  ///< w_0 .. w_{N-1}
  std::uint64_t seed = 0;

  int horizon() const { return static_cast<int>(inputs.size()); }
};

class RolloutError : public std::runtime_error {
 public:
  RolloutError(const std::string& what, int step) : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// splitmix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);
/// Seed of rollout `index` in a batch.
std::uint64_t rollout_seed(std::uint64_t base, std::uint64_t index);

/// Simulates N steps from x0; the disturbance at each step is uniform on
/// `disturbance` coordinate-wise, drawn from a stream seeded with `seed`.
Trajectory rollout(const Controller& controller, const Vec& x0, const Box& disturbance, const DynamicsModel& model,
                   int horizon, std::uint64_t seed);

/// Re-simulates a stored trajectory from its x0 and seed.
Trajectory replay(const Trajectory& stored, const Controller& controller, const Box& disturbance,
                  const DynamicsModel& model);

/// Initial state of the rollout with `seed`: a factor-uniform sample of
/// x~_0 + (1 + sigma) G^0 B.
Vec initial_state(const Zonotope& lambda0, double sigma, std::uint64_t seed);

/// n independent rollouts; rollout i uses rollout_seed(base_seed, i) and
/// starts at initial_state(lambda0, sigma, that seed). Independent of `workers`.
std::vector<Trajectory> batch_rollouts(const Controller& controller, const Zonotope& lambda0, double sigma, int count,
                                       const Box& disturbance, const DynamicsModel& model, int horizon,
                                       std::uint64_t base_seed, int workers = 1);

/// Batch CSV: rollout,seed,k,x1..xn,u1..um,w1..wn (inputs and disturbances
/// empty on the terminal row).
void write_rollouts_csv(const std::vector<Trajectory>& trajs, const std::filesystem::path& path);
std::vector<Trajectory> read_rollouts_csv(const std::filesystem::path& path, int state_dim, int input_dim);

}  // namespace safetrack
