#pragma once

// Experiment configuration (YAML). Every key is optional; missing keys take
// the defaults below, unknown keys are rejected.

#include "safetrack/controller.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>

namespace safetrack {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct ExperimentConfig {
  std::string name = "dubins";
  std::string model = "dubins";
  double sampling_time = 0.05;
  std::uint64_t seed = 1;
  int workers = 0;  ///< 0: hardware concurrency

  ProblemSpec problem;
  /// Half-widths of the disturbance box the sets are built for.
  Vec brs_disturbance;
  /// Half-widths of the uniform disturbance used in simulation.
  Vec sim_disturbance;

  PlannerParams planner;
  /// Smallest admissible safe-box half-width of a planned state.
  double min_safe_radius = 0.03;

  TubeParams tubes;
  double gamma = 1.1;

  TrainConfig training;

  double margin = 0.01;
  std::vector<AxisRole> roles;
  int rollouts = 1000;
  double sigma = 0.0;
  double delta = 0.001;
};

/// Paper geometry for the Dubins car, starting at `start`.
ExperimentConfig default_config(const Vec& start);

ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every field written out; parse_config(emit_config(c)) reproduces c.
std::string emit_config(const ExperimentConfig& cfg);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

/// Model with the set-computation disturbance.
std::unique_ptr<DynamicsModel> make_model(const ExperimentConfig& cfg);
Box simulation_disturbance(const ExperimentConfig& cfg);

}  // namespace safetrack
