#pragma once

// The end-to-end chain plan -> brs -> train -> rollout -> certify -> report,
// both in memory and as file-backed stages working on an output directory.

#include "safetrack/config.hpp"
#include "safetrack/conformal.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace safetrack {

/// Seed of a pipeline stage, derived from the experiment seed.
std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage);

/// Planner parameters with the safe-box admissibility filter installed.
PlannerParams planner_params(const ExperimentConfig& cfg);

NominalTrajectory run_plan(const ExperimentConfig& cfg, const DynamicsModel& model);
BrsResult run_brs(const ExperimentConfig& cfg, const DynamicsModel& model, const NominalTrajectory& traj);
std::vector<TrainedStep> run_train(const ExperimentConfig& cfg, const DynamicsModel& model,
                                   const NominalTrajectory& traj, const BrsResult& brs);
std::vector<Trajectory> run_rollouts(const ExperimentConfig& cfg, const DynamicsModel& model, const BrsResult& brs,
                                     const Controller& controller, double sigma, int count);
SafeSetSequence run_safe_sets(const ExperimentConfig& cfg, const NominalTrajectory& traj);
std::vector<double> trajectory_scores(const std::vector<Trajectory>& trajs, const SafeSetSequence& safe,
                                      const Box& target);

int resolved_workers(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// File-backed stages

/// An upstream file is missing; the message names the producing stage.
class MissingArtifactError : public std::runtime_error {
 public:
  MissingArtifactError(const std::filesystem::path& file, const std::string& stage)
      : std::runtime_error("missing " + file.string() + "; run " + stage + " first"), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

namespace artifacts {
inline constexpr const char* kConfig = "effective_config.yaml";
inline constexpr const char* kNominal = "nominal.txt";
inline constexpr const char* kNominalCsv = "nominal.csv";
inline constexpr const char* kBrs = "brs.txt";
inline constexpr const char* kBrsTrace = "brs_trace.txt";
inline constexpr const char* kControllers = "controllers";
inline constexpr const char* kTrainingLog = "training_log.csv";
inline constexpr const char* kTrainingSummary = "training_summary.csv";
inline constexpr const char* kRollouts = "rollouts.csv";
inline constexpr const char* kCertificateJson = "certificate.json";
inline constexpr const char* kCertificateText = "certificate.txt";
inline constexpr const char* kTimings = "timings.txt";
inline constexpr const char* kReport = "report.txt";
inline constexpr const char* kFigures = "figures";
}  // namespace artifacts

struct StageContext {
  ExperimentConfig config;
  std::filesystem::path out;
  std::ostream* log = nullptr;
};

void stage_plan(const StageContext& ctx);
void stage_brs(const StageContext& ctx);
void stage_train(const StageContext& ctx);
void stage_rollout(const StageContext& ctx);
void stage_certify(const StageContext& ctx);
void stage_report(const StageContext& ctx);
void stage_all(const StageContext& ctx);

/// Writes the SVG of the x-y projection and the CSVs behind it into `dir`.
void write_figures(const std::filesystem::path& dir, const ExperimentConfig& cfg, const NominalTrajectory& traj,
                   const BrsResult& brs, const SafeSetSequence& safe, const std::vector<Trajectory>& rollouts,
                   const std::vector<double>& scores);

}  // namespace safetrack
