#pragma once

// Discrete-time dynamics x+ = f(x, u) + w with analytic derivatives and
// interval Hessian enclosures, plus the reach-avoid problem geometry.

#include "safetrack/geom.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace safetrack {

class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;

  virtual std::string name() const = 0;
  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;

  virtual Vec step(const Vec& x, const Vec& u) const = 0;
  virtual Mat jacobian_x(const Vec& x, const Vec& u) const = 0;
  virtual Mat jacobian_u(const Vec& x, const Vec& u) const = 0;

  /// Interval enclosure of the Hessian of f_i with respect to z = [x; u]
  /// over the box tx x tu; (n+m) x (n+m).
  virtual IntervalMatrix interval_hessian(int i, const Box& tx, const Box& tu) const = 0;

  /// Exact Hessian of f_i at a point; used by tests.
  virtual Mat hessian(int i, const Vec& x, const Vec& u) const = 0;

  /// Bounded additive disturbance set W = [-w, w].
  const Box& disturbance() const { return disturbance_; }

 protected:
  explicit DynamicsModel(Box disturbance) : disturbance_(std::move(disturbance)) {}

 private:
  Box disturbance_;
};

/// Forward-Euler unicycle:
///   x1+ = x1 + ts u1 cos x3,  x2+ = x2 + ts u1 sin x3,  x3+ = x3 + ts u2.
class DubinsCar final : public DynamicsModel {
 public:
  DubinsCar(double sampling_time, Box disturbance);

  std::string name() const override { return "dubins"; }
  int state_dim() const override { return 3; }
  int input_dim() const override { return 2; }
  double sampling_time() const { return ts_; }

  Vec step(const Vec& x, const Vec& u) const override;
  Mat jacobian_x(const Vec& x, const Vec& u) const override;
  Mat jacobian_u(const Vec& x, const Vec& u) const override;
  IntervalMatrix interval_hessian(int i, const Box& tx, const Box& tu) const override;
  Mat hessian(int i, const Vec& x, const Vec& u) const override;

 private:
  double ts_;
};

/// x+ = A x + B u + c.
class AffineModel final : public DynamicsModel {
 public:
  AffineModel(Mat a, Mat b, Vec c, Box disturbance);

  std::string name() const override { return "affine"; }
  int state_dim() const override { return static_cast<int>(a_.rows()); }
  int input_dim() const override { return static_cast<int>(b_.cols()); }

  Vec step(const Vec& x, const Vec& u) const override { return a_ * x + b_ * u + c_; }
  Mat jacobian_x(const Vec&, const Vec&) const override { return a_; }
  Mat jacobian_u(const Vec&, const Vec&) const override { return b_; }
  IntervalMatrix interval_hessian(int i, const Box& tx, const Box& tu) const override;
  Mat hessian(int, const Vec&, const Vec&) const override;

 private:
  Mat a_;
  Mat b_;
  Vec c_;
};

/// dubins_step without a model object.
Vec dubins_step(const Vec& x, const Vec& u, double sampling_time);

/// Reach-avoid geometry. Horizon is an output of planning and lives on the
/// nominal trajectory.
struct ProblemSpec {
  Box operating;
  UnsafeRegion unsafe;
  Box target;
  Box initial;
  Box inputs;
};

/// Checks the initial and target sets lie in the operating domain and miss
/// every unsafe piece. Returns human-readable issues, empty when consistent.
std::vector<std::string> check_problem(const ProblemSpec& spec);

enum class AxisRole { kSeparating, kNonSeparating };

struct SafeRadii {
  Vec plus;
  Vec minus;
};

/// One-sided half-widths of the forward safe box around x. Separating axes
/// are limited by the domain face and by every unsafe piece that lies
/// strictly ahead (or behind) in that axis; non-separating axes only by the
/// domain. Both shrink by `margin`. Radii may come out negative.
SafeRadii safe_box_radii(const ProblemSpec& spec, const Vec& x, double margin, const std::vector<AxisRole>& roles);

/// Symmetric half-widths of a box around x that stays `margin` inside the
/// domain and, for every unsafe piece, at least `margin` apart from it in
/// some separating axis. Pieces are handled in order; each overlapping piece
/// cuts the separating axis that keeps the largest share of its radius.
/// Radii may come out non-positive when x is too close to a face.
Vec clearance_radii(const ProblemSpec& spec, const Vec& x, double margin, const std::vector<AxisRole>& roles);

/// True when, for every unsafe piece, some separating axis keeps `b`
/// strictly apart from it, and b lies in the operating domain.
bool separated_from_unsafe(const Box& b, const ProblemSpec& spec, const std::vector<AxisRole>& roles);

/// Upper bounds on |Hess f_i| entries over tx x tu (one matrix per i).
std::vector<Mat> hessian_bounds(const DynamicsModel& model, const Box& tx, const Box& tu);

struct InvertibilityReport {
  int samples = 0;
  double min_abs_det = kInf;
  double max_condition = 0.0;
  /// Neumann-series bound sup ||D_x f - I||_inf over the samples.
  double max_perturbation_norm = 0.0;
  bool pass = true;
};

/// Samples (x, u) in region_x x region_u and reports how close D_x f comes to
/// singularity. Fails when |det| drops below `min_det` or the condition
/// number exceeds `max_condition`.
InvertibilityReport check_jacobian_invertibility(const DynamicsModel& model, const Box& region_x,
                                                 const Box& region_u, int samples, std::uint64_t seed,
                                                 double min_det = 1e-8, double max_condition = 1e10);

}  // namespace safetrack
