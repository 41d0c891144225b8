#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace safetrack;
using namespace testing;

namespace {

bool box_near(const Box& a, const Box& b, double tol = 1e-12) {
  return a.dim() == b.dim() && (a.lower() - b.lower()).cwiseAbs().maxCoeff() <= tol &&
         (a.upper() - b.upper()).cwiseAbs().maxCoeff() <= tol;
}

// x + v stays in z for every vertex v of [-w, w].
bool absorbs(const Zonotope& z, const Vec& x, const Vec& w) {
  for (const Vec& v : Box(-w, w).vertices())
    if (!bounded_feasible(z.generators(), x + v - z.center())) return false;
  return true;
}

}  // namespace

TEST_CASE("box membership, intersection and distance") {
  const Box b = box({-1, -1}, {1, 1});
  CHECK(b.contains(vec({0.3, -0.2})));
  CHECK(b.contains(vec({1, 1})));
  CHECK_FALSE(b.contains(vec({1.0000001, 0})));
  CHECK(b.distance(vec({0.5, 0.5})) == 0.0);
  CHECK(b.distance(vec({2, 0})) == doctest::Approx(1.0));
  CHECK(b.distance(vec({2, 2})) == doctest::Approx(std::sqrt(2.0)));
  CHECK(b.intersects(box({1, 1}, {2, 2})));
  CHECK_FALSE(b.intersects(box({1.01, -5}, {2, 5})));
  CHECK(b.contains(box({-0.5, 0}, {0.5, 1})));
  CHECK_FALSE(b.contains(box({-0.5, 0}, {0.5, 1.5})));
  CHECK(b.clamp(vec({3, -0.5})) == vec({1, -0.5}));
  CHECK(b.vertices().size() == 4);
  CHECK_THROWS_AS(Box(vec({1, 0}), vec({0, 1})), std::invalid_argument);
  CHECK(Box::point(vec({1, 2})).contains(vec({1, 2})));
}

TEST_CASE("box distance agrees with the clamp oracle") {
  std::mt19937_64 rng(7);
  const Box b = box({-1, 0, 2}, {1, 0.5, 3});
  const Box wide = box({-4, -4, -2}, {4, 4, 6});
  for (int s = 0; s < 500; ++s) {
    const Vec x = uniform_in(wide, rng);
    Vec nearest = x;
    for (int i = 0; i < 3; ++i) nearest(i) = std::clamp(x(i), b.lower()(i), b.upper()(i));
    CHECK(b.distance(x) == doctest::Approx((x - nearest).norm()).epsilon(1e-12));
  }
}

TEST_CASE("unsafe region queries") {
  UnsafeRegion u{{box({0, 0}, {1, 1}), box({2, 2}, {3, 3})}};
  CHECK(u.piece_containing(vec({2.5, 2.5})) == 1);
  CHECK(u.piece_containing(vec({1.5, 1.5})) == -1);
  CHECK(u.contains(vec({0, 0})));
  CHECK(u.intersects(box({0.5, 0.5}, {1.5, 1.5})));
  CHECK_FALSE(u.intersects(box({1.1, 1.1}, {1.9, 1.9})));
}

TEST_CASE("linear map") {
  const Zonotope unit(vec({0, 0}), Mat::Identity(2, 2));
  const Zonotope same = linear_map(Mat::Identity(2, 2), unit);
  CHECK(same.center() == unit.center());
  CHECK(same.generators() == unit.generators());

  const Zonotope z(vec({1, 0}), Mat::Identity(2, 2));
  const Zonotope doubled = linear_map(2.0 * Mat::Identity(2, 2), z);
  CHECK(doubled.center() == vec({2, 0}));
  CHECK(doubled.generators() == 2.0 * Mat::Identity(2, 2));

  Mat rot(2, 2);
  rot << 0, -1, 1, 0;
  const Zonotope turned = linear_map(rot, unit);
  // Vertices (+-1, +-1) rotate onto themselves as a set.
  CHECK(box_near(interval_hull(turned), box({-1, -1}, {1, 1})));
  CHECK(turned.generators().col(0) == vec({0, 1}));
  CHECK(turned.generators().col(1) == vec({-1, 0}));

  CHECK_THROWS_AS(linear_map(Mat::Identity(3, 3), unit), DimensionError);
}

TEST_CASE("minkowski sum") {
  const Zonotope z(vec({1, 2}), Mat::Identity(2, 2));
  const Zonotope plus_zero = minkowski_sum(z, Box::point(vec({0, 0}))).pruned();
  CHECK(plus_zero.generators() == z.generators());
  CHECK(plus_zero.center() == z.center());

  const Zonotope grown = minkowski_sum(Zonotope(vec({0, 0}), Mat::Identity(2, 2)), box({-1, -1}, {1, 1}));
  CHECK(box_near(interval_hull(grown), box({-2, -2}, {2, 2})));

  const Zonotope point(vec({3, -1}), Mat(2, 0));
  CHECK(box_near(interval_hull(minkowski_sum(point, box({0, 1}, {2, 5}))), box({3, 0}, {5, 4})));

  std::mt19937_64 rng(3);
  const Zonotope a = random_zonotope(3, 4, rng);
  const Zonotope b = random_zonotope(3, 2, rng);
  const Zonotope s = minkowski_sum(a, b);
  CHECK(s.order() == 6);
  CHECK((s.center() - (a.center() + b.center())).norm() < 1e-15);
}

TEST_CASE("interval hull") {
  CHECK(interval_hull(Zonotope(vec({1, 1}), Mat(2, 0))) == box({1, 1}, {1, 1}));
  Mat g(2, 2);
  g << 1, 1, 0, 1;
  CHECK(interval_hull(Zonotope(vec({0, 0}), g)) == box({-2, -1}, {2, 1}));
  CHECK(interval_hull(Zonotope(vec({0, 0}), Mat::Identity(2, 2))) == box({-1, -1}, {1, 1}));

  // Oracle: the hull is attained by some sign vector and bounds every sample.
  std::mt19937_64 rng(11);
  const Zonotope z = random_zonotope(3, 5, rng);
  const Box h = interval_hull(z);
  Vec lo = Vec::Constant(3, kInf);
  Vec hi = Vec::Constant(3, -kInf);
  for (int mask = 0; mask < 32; ++mask) {
    Vec b(5);
    for (int i = 0; i < 5; ++i) b(i) = (mask >> i & 1) ? 1.0 : -1.0;
    const Vec p = z.center() + z.generators() * b;
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  CHECK((h.lower() - lo).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((h.upper() - hi).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("minkowski difference under-approximation: worked cases") {
  const Zonotope big(vec({0, 0}), 2.0 * Mat::Identity(2, 2));
  const DifferenceResult r = minkowski_diff_under_detailed(big, vec({1, 1}));
  CHECK_FALSE(r.used_fallback);
  // Exact difference of the boxes is [-1,1]^2.
  CHECK(box({-1, -1}, {1, 1}).contains(interval_hull(r.set)));
  for (const Vec& v : box({-0.999, -0.999}, {0.999, 0.999}).vertices()) CHECK(r.set.contains(v));

  const Zonotope z(vec({0.5, -0.5}), Mat::Identity(2, 2));
  const Zonotope unchanged = minkowski_diff_under(z, vec({0, 0}));
  CHECK(unchanged.generators() == z.generators());
  CHECK(unchanged.center() == z.center());

  CHECK_THROWS_AS(minkowski_diff_under(Zonotope(vec({0, 0}), Mat::Identity(2, 2)), vec({2, 2})), EmptySetError);
  CHECK_THROWS_AS(minkowski_diff_under(z, box({-1, 0}, {0.5, 1})), std::invalid_argument);
}

TEST_CASE("minkowski difference under-approximation is sound") {
  std::mt19937_64 rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 2;
    const Zonotope z = random_zonotope(n, n + 2 + trial % 4, rng);
    const Vec w = 0.15 * interval_hull(z).radius().cwiseProduct(uniform_in(Box(Vec::Zero(n), Vec::Ones(n)), rng));
    Zonotope d;
    try {
      d = minkowski_diff_under(z, w);
    } catch (const EmptySetError&) {
      continue;
    }
    for (const Vec& x : sample(d, 60, SampleMode::kExtreme, 100 + trial)) CHECK(absorbs(z, x, w));
    for (const Vec& x : sample(d, 40, SampleMode::kUniform, 200 + trial)) CHECK(absorbs(z, x, w));
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("2D membership agrees between the LP and the facet oracle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Zonotope z = random_zonotope(2, 2 + trial % 5, rng);
    const Box around = Box::centered(z.center(), 1.3 * interval_hull(z).radius());
    for (int s = 0; s < 50; ++s) {
      const Vec y = uniform_in(around, rng);
      const bool facet = contains_2d(z, y, 0.0);
      // Skip points within round-off of the boundary.
      if (facet != contains_2d(z, y, 1e-6)) continue;
      CHECK(z.contains(y) == facet);
    }
  }
}

TEST_CASE("shrink into box") {
  const Zonotope inside(vec({0, 0}), 0.5 * Mat::Identity(2, 2));
  CHECK(shrink_factor(inside, box({-1, -1}, {1, 1})) == 1.0);
  CHECK(shrink_into_box(inside, box({-1, -1}, {1, 1})).generators() == inside.generators());

  const Zonotope unit(vec({0, 0}), Mat::Identity(2, 2));
  CHECK(shrink_factor(unit, box({-0.5, -0.5}, {0.5, 0.5})) == doctest::Approx(0.5).epsilon(1e-11));
  CHECK((shrink_into_box(unit, box({-0.5, -0.5}, {0.5, 0.5})).generators() - 0.5 * Mat::Identity(2, 2))
            .cwiseAbs()
            .maxCoeff() < 1e-11);

  const Zonotope off(vec({0.5, 0}), Mat::Identity(2, 2));
  CHECK(shrink_factor(off, box({-1, -1}, {1, 1})) == doctest::Approx(0.5).epsilon(1e-11));
  CHECK_THROWS_AS(shrink_factor(off, box({0.5, -1}, {1, 1})), std::invalid_argument);
}

TEST_CASE("per-generator shrink stays in the box and beats the uniform shrink") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const Zonotope z = random_zonotope(3, 6, rng);
    const Vec r = interval_hull(z).radius();
    const Box b(z.center() - r.cwiseProduct(uniform_in(Box(Vec::Constant(3, 0.1), Vec::Ones(3)), rng)),
                z.center() + r.cwiseProduct(uniform_in(Box(Vec::Constant(3, 0.1), Vec::Ones(3)), rng)));
    const Zonotope lp = shrink_generators_into_box(z, b);
    const Zonotope uni = shrink_into_box(z, b);
    CHECK(b.contains(interval_hull(lp)));
    CHECK(b.contains(interval_hull(uni)));
    // Each kept generator is a non-negative multiple (<= 1) of an original one.
    for (int i = 0; i < lp.order(); ++i) {
      bool matched = false;
      for (int j = 0; j < z.order() && !matched; ++j) {
        const double t = lp.generators().col(i).dot(z.generators().col(j)) / z.generators().col(j).squaredNorm();
        matched = t >= -1e-12 && t <= 1 + 1e-12 &&
                  (lp.generators().col(i) - t * z.generators().col(j)).norm() < 1e-9;
      }
      CHECK(matched);
    }
    for (const Vec& x : sample(lp, 30, SampleMode::kExtreme, trial)) CHECK(z.contains(x, 1e-7));
    const Vec slack = (z.center() - b.lower()).cwiseMin(b.upper() - z.center());
    auto retained = [&](const Zonotope& s) {
      return (s.generators().cwiseAbs().rowwise().sum().array() / slack.array()).sum();
    };
    CHECK(retained(lp) >= retained(uni) - 1e-9);
  }
}

TEST_CASE("sampling") {
  const Zonotope unit(vec({0, 0}), Mat::Identity(2, 2));
  CHECK(sample(unit, 0, SampleMode::kUniform, 1).empty());
  const Zonotope point(vec({1, 2}), Mat(2, 0));
  const auto pts = sample(point, 5, SampleMode::kUniform, 1);
  REQUIRE(pts.size() == 5);
  for (const Vec& p : pts) CHECK(p == vec({1, 2}));
  for (const Vec& p : sample(unit, 4, SampleMode::kExtreme, 9)) {
    CHECK(std::abs(p(0)) == 1.0);
    CHECK(std::abs(p(1)) == 1.0);
  }
  const auto a = sample(unit, 20, SampleMode::kUniform, 42);
  const auto b = sample(unit, 20, SampleMode::kUniform, 42);
  CHECK(a == b);
  CHECK(a != sample(unit, 20, SampleMode::kUniform, 43));
  for (const Vec& p : a) CHECK(unit.contains(p));
  CHECK_THROWS(sample(unit, -1, SampleMode::kUniform, 1));
}

TEST_CASE("projected outline is the exact 2D projection") {
  const Zonotope unit(vec({0, 0, 5}), Mat::Identity(3, 3));
  const auto square = projected_outline(unit, 0, 1);
  REQUIRE(square.size() == 4);
  std::set<std::pair<double, double>> corners;
  for (const auto& p : square) corners.insert({p.x(), p.y()});
  CHECK(corners == std::set<std::pair<double, double>>{{-1, -1}, {-1, 1}, {1, -1}, {1, 1}});

  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Zonotope z = random_zonotope(3, 5, rng);
    const auto poly = projected_outline(z, 0, 2);
    Mat proj(2, 3);
    proj << 1, 0, 0, 0, 0, 1;
    const Zonotope flat = linear_map(proj, z);
    // Counter-clockwise convex polygon whose vertices lie on the projection.
    double area = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const auto& p = poly[i];
      const auto& q = poly[(i + 1) % poly.size()];
      area += p.x() * q.y() - q.x() * p.y();
      CHECK(contains_2d(flat, Vec(p), 1e-9));
    }
    CHECK(area > 0.0);
    // Every projected sample is inside the polygon.
    for (const Vec& x : sample(z, 100, SampleMode::kUniform, trial)) {
      const Eigen::Vector2d y(x(0), x(2));
      for (std::size_t i = 0; i < poly.size(); ++i) {
        const Eigen::Vector2d e = poly[(i + 1) % poly.size()] - poly[i];
        const Eigen::Vector2d d = y - poly[i];
        CHECK(e.x() * d.y() - e.y() * d.x() >= -1e-9);
      }
    }
  }
}

TEST_CASE("records round-trip bit for bit") {
  std::mt19937_64 rng(1);
  const Zonotope z = random_zonotope(3, 4, rng);
  const Box b(vec({-0.1, 1.0 / 3.0, -1e-300}), vec({0.1, 2.0 / 3.0, 1e300}));
  std::stringstream ss;
  write_record(ss, z);
  write_record(ss, b);
  RecordReader r(ss);
  const Zonotope z2 = r.read_zonotope();
  const Box b2 = r.read_box();
  CHECK(z2.center() == z.center());
  CHECK(z2.generators() == z.generators());
  CHECK(b2 == b);
}

TEST_CASE("record reader reports the failing line") {
  std::stringstream ss("# comment\nbox 2\nlower 0 0\nupper 1 oops\n");
  RecordReader r(ss);
  try {
    r.read_box();
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  std::stringstream truncated("zonotope 2 1\ncenter 0 0\nrow 1\n");
  RecordReader t(truncated);
  CHECK_THROWS_AS(t.read_zonotope(), ParseError);
}

TEST_CASE("format_double round-trips") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) / (1 + i);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(3.0) == "3");
}
