#pragma once

#include "safetrack/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace testing {

using safetrack::Box;
using safetrack::Mat;
using safetrack::Vec;
using safetrack::Zonotope;

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Box box(std::initializer_list<double> lo, std::initializer_list<double> hi) { return Box(vec(lo), vec(hi)); }

inline Vec uniform_in(const Box& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec x(b.dim());
  for (int i = 0; i < b.dim(); ++i) x(i) = b.lower()(i) + u(rng) * (b.upper()(i) - b.lower()(i));
  return x;
}

inline Mat random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

inline Zonotope random_zonotope(int n, int q, std::mt19937_64& rng) {
  return Zonotope(random_matrix(n, 1, rng).col(0), random_matrix(n, q, rng));
}

// b is a factor vector of y: |b|_inf <= 1 and G b = y.
inline bool factor_witness_ok(const Mat& g, const Vec& y, const Vec& b, double tol = 1e-7) {
  return b.size() == g.cols() && b.cwiseAbs().maxCoeff() <= 1.0 + tol && (g * b - y).cwiseAbs().maxCoeff() <= tol;
}

// Exact 2D containment: y is in c + G B iff for every direction a normal to a
// generator, |a.(y - c)| <= sum |a.g_i|. Those normals plus the axes define
// every facet of a 2D zonotope.
inline bool contains_2d(const Zonotope& z, const Vec& y, double tol = 1e-9) {
  std::vector<Eigen::Vector2d> dirs{{1, 0}, {0, 1}};
  for (int i = 0; i < z.order(); ++i) dirs.emplace_back(-z.generators()(1, i), z.generators()(0, i));
  const Vec d = y - z.center();
  for (const auto& a : dirs) {
    if (a.norm() < 1e-14) continue;
    double support = 0.0;
    for (int i = 0; i < z.order(); ++i) support += std::abs(a(0) * z.generators()(0, i) + a(1) * z.generators()(1, i));
    if (std::abs(a(0) * d(0) + a(1) * d(1)) > support + tol * (1.0 + support)) return false;
  }
  return true;
}

// Exact 3D containment for a full-dimensional zonotope: every facet normal
// is the cross product of two generators.
inline bool contains_3d(const Zonotope& z, const Vec& y, double tol = 1e-9) {
  const Mat& g = z.generators();
  const Eigen::Vector3d d = y - z.center();
  std::vector<Eigen::Vector3d> dirs{Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ()};
  for (int i = 0; i < z.order(); ++i)
    for (int j = i + 1; j < z.order(); ++j) {
      const Eigen::Vector3d n = Eigen::Vector3d(g.col(i)).cross(Eigen::Vector3d(g.col(j)));
      if (n.norm() > 1e-12 * g.col(i).norm() * g.col(j).norm()) dirs.push_back(n.normalized());
    }
  for (const auto& a : dirs) {
    const double support = (a.transpose() * g).cwiseAbs().sum();
    if (std::abs(a.dot(d)) > support + tol * (1.0 + support)) return false;
  }
  return true;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Fresh empty directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("safetrack_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Default Dubins instance from (1, 1, 0), planned and with its reachable
/// sets; computed once per test binary.
struct DefaultCase {
  safetrack::ExperimentConfig cfg;
  std::unique_ptr<safetrack::DynamicsModel> model;
  safetrack::NominalTrajectory traj;
  safetrack::BrsResult brs;
};

inline const DefaultCase& default_case() {
  static const DefaultCase c = [] {
    DefaultCase d;
    d.cfg = safetrack::parse_config("");
    d.model = safetrack::make_model(d.cfg);
    d.traj = safetrack::run_plan(d.cfg, *d.model);
    d.brs = safetrack::run_brs(d.cfg, *d.model, d.traj);
    return d;
  }();
  return c;
}

}  // namespace testing
