#pragma once

// Axis-aligned boxes, zonotopes, and the set operations the reachability
// pipeline needs. All operations are pure; objects are immutable once built.

#include "safetrack/numerics.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace safetrack {

/// The requested under-approximation has no non-empty representative.
class EmptySetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Closed hyper-rectangle [lower, upper].
class Box {
 public:
  Box() = default;
  Box(Vec lower, Vec upper);
  static Box centered(const Vec& center, const Vec& radius);
  static Box point(const Vec& p) { return Box(p, p); }

  int dim() const { return static_cast<int>(lower_.size()); }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  Vec center() const { return 0.5 * (lower_ + upper_); }
  Vec radius() const { return 0.5 * (upper_ - lower_); }

  bool contains(const Vec& x) const;
  /// Strict interior membership with a per-coordinate margin.
  bool contains_interior(const Vec& x, const Vec& margin) const;
  bool contains(const Box& other) const;
  bool intersects(const Box& other) const;
  /// Euclidean distance from x to the box (zero inside).
  double distance(const Vec& x) const;
  /// Per-coordinate clamp of x into the box.
  Vec clamp(const Vec& x) const;
  /// All 2^n vertices (n <= 20).
  std::vector<Vec> vertices() const;

  friend bool operator==(const Box& a, const Box& b) { return a.lower_ == b.lower_ && a.upper_ == b.upper_; }

 private:
  Vec lower_;
  Vec upper_;
};

/// Union of boxes that the state must avoid.
struct UnsafeRegion {
  std::vector<Box> pieces;

  bool contains(const Vec& x) const;
  bool intersects(const Box& b) const;
  /// Index of the first piece containing x, or -1.
  int piece_containing(const Vec& x) const;
};

/// Set {c + G b : |b|_inf <= 1}.
class Zonotope {
 public:
  Zonotope() = default;
  Zonotope(Vec center, Mat generators);
  static Zonotope from_box(const Box& b);

  int dim() const { return static_cast<int>(center_.size()); }
  int order() const { return static_cast<int>(generators_.cols()); }
  const Vec& center() const { return center_; }
  const Mat& generators() const { return generators_; }

  /// Drops generator columns whose Euclidean norm is below `tol`.
  Zonotope pruned(double tol = 1e-12) const;
  /// c + s * G B.
  Zonotope scaled(double s) const;
  Zonotope translated(const Vec& t) const;

  /// Membership through the bounded feasibility LP, with `tol` slack on the
  /// factor bound.
  bool contains(const Vec& x, double tol = 1e-9) const;

 private:
  Vec center_;
  Mat generators_;
};

// ---------------------------------------------------------------------------
// Set operations

Zonotope linear_map(const Mat& m, const Zonotope& z);
Zonotope minkowski_sum(const Zonotope& a, const Zonotope& b);
Zonotope minkowski_sum(const Zonotope& z, const Box& b);

/// Tightest axis-aligned box containing z.
Box interval_hull(const Zonotope& z);

/// Result of the Minkowski-difference under-approximation. `scaling` holds
/// the per-generator keep factors (1 - beta_i).
struct DifferenceResult {
  Zonotope set;
  Vec scaling;
  bool used_fallback = false;
};

/// Under-approximates z - [-w, w] by shrinking generators: finds beta in
/// [0,1]^q with [-w,w] contained in G diag(beta) B (generator-containment LP,
/// minimizing sum beta) and returns <c, G diag(1 - beta)>. Falls back to a
/// uniform scaling computed from the zonotope gauge of the box vertices.
/// Throws EmptySetError when neither route fits the box.
DifferenceResult minkowski_diff_under_detailed(const Zonotope& z, const Vec& half_widths);
Zonotope minkowski_diff_under(const Zonotope& z, const Vec& half_widths);
Zonotope minkowski_diff_under(const Zonotope& z, const Box& symmetric_box);

/// Largest uniform alpha in [0,1] with interval_hull(<c, alpha G>) inside b.
/// Throws std::invalid_argument when the center is not strictly inside b.
double shrink_factor(const Zonotope& z, const Box& b);
Zonotope shrink_into_box(const Zonotope& z, const Box& b);
/// Per-generator variant: <c, G diag(beta)> with beta in [0,1]^q chosen by an
/// LP that keeps the interval hull inside b while retaining as much of each
/// generator's hull contribution as possible. Never smaller than the uniform
/// result in that objective.
Zonotope shrink_generators_into_box(const Zonotope& z, const Box& b);

enum class SampleMode { kUniform, kExtreme };

/// Factor-space sampling: uniform draws b ~ U[-1,1]^q, extreme draws
/// b ~ U{-1,+1}^q; each point is c + G b. Deterministic in `seed`.
std::vector<Vec> sample(const Zonotope& z, int count, SampleMode mode, std::uint64_t seed);

/// Vertices of the 2D projection onto coordinates (i, j), counter-clockwise.
std::vector<Eigen::Vector2d> projected_outline(const Zonotope& z, int i, int j);

// ---------------------------------------------------------------------------
// Plain-text records
//
//   box <n>
//   lower v1 ... vn
//   upper v1 ... vn
//
//   zonotope <n> <q>
//   center v1 ... vn
//   row g11 ... g1q            (n rows)

void write_record(std::ostream& os, const Box& b);
void write_record(std::ostream& os, const Zonotope& z);

/// Line-oriented reader that tracks line numbers for error reporting.
class RecordReader {
 public:
  explicit RecordReader(std::istream& is) : is_(is) {}

  /// Next non-empty, non-comment line split into tokens; empty at EOF.
  std::vector<std::string> next_tokens();
  /// Like next_tokens, but throws ParseError at EOF.
  std::vector<std::string> expect_tokens(const std::string& what);
  int line() const { return line_; }

  Box read_box();
  Zonotope read_zonotope();
  double parse_double(const std::string& token);
  long parse_int(const std::string& token);
  Vec parse_vector(const std::vector<std::string>& tokens, std::size_t first, std::size_t count);

 private:
  std::istream& is_;
  int line_ = 0;
};

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

}  // namespace safetrack
