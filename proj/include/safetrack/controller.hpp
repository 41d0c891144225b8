#pragma once

// Per-step tracking network
//   x0 = x - x~_k
//   h_j = relu(W_j h_{j-1} + b_j),                j = 1..L
//   h_{L+1} = x0 .* (W_mul h_L + b_mul)
//   mu~(x) = R .* tanh(W_out h_{L+1}) + u~_k
// so mu~(x~_k) = u~_k and |mu~(x) - u~_k| <= |R| for every x. The applied
// input is mu~ clamped to U.

#include "safetrack/brs.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace safetrack {

class StepNet {
 public:
  /// Named slice of the flat parameter vector; matrices are row-major.
  struct Block {
    std::string name;
    int rows;
    int cols;
    std::size_t offset;
  };

  StepNet() = default;
  StepNet(int step, Vec x_nom, Vec u_nom, std::vector<int> hidden);

  int step() const { return step_; }
  int state_dim() const { return static_cast<int>(x_nom_.size()); }
  int input_dim() const { return static_cast<int>(u_nom_.size()); }
  const std::vector<int>& hidden() const { return hidden_; }
  const Vec& x_nom() const { return x_nom_; }
  const Vec& u_nom() const { return u_nom_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& block(const std::string& name) const;

  /// Hidden layer j (0-based) weights/biases, then "mul_w", "mul_b", "out_w", "scale".
  static std::string weight_name(int j) { return "w" + std::to_string(j + 1); }
  static std::string bias_name(int j) { return "b" + std::to_string(j + 1); }

  Vec scale() const;
  void set_scale(const Vec& r);

  /// Kaiming-normal weights (std sqrt(2 / fan_in)), zero biases, and the
  /// given output scale.
  void initialize(std::uint64_t seed, const Vec& scale);

  Vec forward_raw(const Vec& x) const;
  Vec forward_trimmed(const Vec& x, const Box& inputs) const;

 private:
  int step_ = 0;
  Vec x_nom_;
  Vec u_nom_;
  std::vector<int> hidden_;
  std::vector<double> params_;
  std::vector<Block> blocks_;
};

// ---------------------------------------------------------------------------
// Loss and gradients

struct LossWeights {
  double lambda = 0.1;
  double alpha1 = 10.0;
  double alpha2 = 0.01;
};

struct LossValue {
  double total = 0.0;
  double tracking = 0.0;  ///< P1
  double scale = 0.0;     ///< P2 = ||R||_1
};

/// Everything the step-k loss needs besides the network.
struct StepTarget {
  const DynamicsModel* model = nullptr;
  Vec x_next;  ///< x~_{k+1}
  Mat pinv;    ///< (G~^{k+1})^dagger
};

/// d(x) = pinv (f(x, mu~(x)) - x~_{k+1}).
Vec tracking_coordinates(const StepNet& net, const StepTarget& target, const Vec& x);

/// P = alpha1 mean[|d|_inf + lambda exp(max(|d|_inf - 1, 0))] + alpha2 |R|_1.
/// Throws std::invalid_argument on an empty batch.
LossValue step_loss(const StepNet& net, const StepTarget& target, const std::vector<Vec>& batch,
                    const LossWeights& weights);

/// Loss plus its gradient with respect to net.params(). The inf-norm routes
/// through its first maximizing coordinate; relu'(0) = 0.
LossValue step_loss_gradient(const StepNet& net, const StepTarget& target, const std::vector<Vec>& batch,
                             const LossWeights& weights, std::vector<double>& grad);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  LossWeights loss;
  int uniform_samples = 40;
  int extreme_samples = 60;
  double train_fraction = 0.7;
  double learning_rate = 3e-4;
  double weight_decay = 1e-4;
  int validation_period = 200;
  int patience = 5;
  int max_epochs = 20000;
  std::vector<int> hidden{32, 32, 32, 32};
  /// Initial |R| as a fraction of the input-tube half-width.
  double scale_init_fraction = 0.25;
};

struct TrainLog {
  int step = 0;
  /// (epoch, mean |d|_inf on the validation set)
  std::vector<std::pair<int, double>> validations;
  int epochs = 0;
  int best_epoch = 0;
  double initial_validation = 0.0;
  double best_validation = 0.0;
  /// Share of validation points with |d|_inf <= 1 for the returned weights.
  double validation_within = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainedStep {
  StepNet net;
  TrainLog log;
};

/// Trains the step-k controller on samples of Lambda_k against
/// Lambda~_{k+1}. Deterministic in `seed`.
TrainedStep train_step_controller(int k, const DynamicsModel& model, const NominalTrajectory& traj,
                                  const BrsResult& brs, const Mat& next_pinv, const TrainConfig& cfg,
                                  std::uint64_t seed);

/// All N steps, spread over `workers` threads; results are independent of
/// the worker count.
std::vector<TrainedStep> train_all(const DynamicsModel& model, const NominalTrajectory& traj, const BrsResult& brs,
                                   const TrainConfig& cfg, std::uint64_t seed, int workers);

// ---------------------------------------------------------------------------
// Optimization-based baseline

struct BaselineParams {
  int grid = 21;
  int max_iterations = 400;
  int lp_passes = 4;
};

struct BaselineResult {
  Vec u;
  double objective = kInf;
  bool success = false;
};

/// Minimizes |pinv (f(x,u) - x_next)|_inf over u in `input_tube` by a grid
/// search, sequential LPs on the input linearization, and coordinate
/// refinement; success iff the minimum <= 1.
BaselineResult baseline_control(const DynamicsModel& model, const Vec& x, const Box& input_tube,
                                const StepTarget& target, const BaselineParams& params = {});

// ---------------------------------------------------------------------------
// Weights I/O

void write_stepnet(std::ostream& os, const StepNet& net);
StepNet read_stepnet(std::istream& is);
void save_stepnet(const StepNet& net, const std::filesystem::path& path);
StepNet load_stepnet(const std::filesystem::path& path);

/// Writes one weights file per step plus "manifest.txt" listing them.
void save_controllers(const std::vector<StepNet>& nets, const std::filesystem::path& dir);
std::vector<StepNet> load_controllers(const std::filesystem::path& dir);

}  // namespace safetrack
