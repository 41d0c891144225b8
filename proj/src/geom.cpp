#include "safetrack/geom.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace safetrack {

namespace {

void require_same_dim(int a, int b, const char* op) {
  if (a != b) {
    std::ostringstream msg;
    msg << op << ": dimension mismatch (" << a << " vs " << b << ")";
    throw DimensionError(msg.str());
  }
}

// min ||gamma||_1 subject to G gamma = rhs.
std::optional<Vec> basis_pursuit(const Mat& g, const Vec& rhs) {
  const auto n = g.rows();
  const auto q = g.cols();
  LinearProgram lp;
  lp.a.resize(n, 2 * q);
  lp.a << g, -g;
  lp.b = rhs;
  lp.c = Vec::Ones(2 * q);
  lp.lower = Vec::Zero(2 * q);
  lp.upper = Vec::Constant(2 * q, kInf);
  const LpResult res = solve_lp(lp);
  if (res.status != LpStatus::kOptimal) return std::nullopt;
  return Vec(res.x.head(q) - res.x.tail(q));
}

// Same objective as the decoupled problems, with the coupling
// sum_j |gamma_ij| <= 1 for every generator i.
std::optional<Mat> coupled_containment(const Mat& g, const Vec& w, const std::vector<int>& active) {
  const auto n = g.rows();
  const auto q = g.cols();
  const auto na = static_cast<Eigen::Index>(active.size());
  // Column blocks: for each active axis a, p_a (q) then m_a (q); then slack (q).
  const auto nv = 2 * q * na + q;
  LinearProgram lp;
  lp.a = Mat::Zero(n * na + q, nv);
  lp.b = Vec::Zero(n * na + q);
  for (Eigen::Index a = 0; a < na; ++a) {
    const auto col = 2 * q * a;
    lp.a.block(n * a, col, n, q) = g;
    lp.a.block(n * a, col + q, n, q) = -g;
    lp.b(n * a + active[static_cast<std::size_t>(a)]) = w(active[static_cast<std::size_t>(a)]);
    for (Eigen::Index i = 0; i < q; ++i) {
      lp.a(n * na + i, col + i) = 1.0;
      lp.a(n * na + i, col + q + i) = 1.0;
    }
  }
  for (Eigen::Index i = 0; i < q; ++i) {
    lp.a(n * na + i, 2 * q * na + i) = 1.0;
    lp.b(n * na + i) = 1.0;
  }
  lp.c = Vec::Zero(nv);
  lp.c.head(2 * q * na).setOnes();
  lp.lower = Vec::Zero(nv);
  lp.upper = Vec::Constant(nv, kInf);
  const LpResult res = solve_lp(lp);
  if (res.status != LpStatus::kOptimal) return std::nullopt;
  Mat gamma = Mat::Zero(q, n);
  for (Eigen::Index a = 0; a < na; ++a) {
    const auto col = 2 * q * a;
    gamma.col(active[static_cast<std::size_t>(a)]) = res.x.segment(col, q) - res.x.segment(col + q, q);
  }
  return gamma;
}

}  // namespace

// ---------------------------------------------------------------------------
// Box

Box::Box(Vec lower, Vec upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size()) throw DimensionError("Box: lower and upper differ in dimension");
  if (lower_.size() < 1) throw DimensionError("Box: dimension must be at least 1");
  for (Eigen::Index i = 0; i < lower_.size(); ++i) {
    if (!(lower_(i) <= upper_(i))) {
      std::ostringstream msg;
      msg << "Box: lower(" << i << ") = " << lower_(i) << " exceeds upper(" << i << ") = " << upper_(i);
      throw std::invalid_argument(msg.str());
    }
  }
}

Box Box::centered(const Vec& center, const Vec& radius) {
  if ((radius.array() < 0.0).any()) throw std::invalid_argument("Box::centered: negative radius");
  return Box(center - radius, center + radius);
}

bool Box::contains(const Vec& x) const {
  require_same_dim(dim(), static_cast<int>(x.size()), "Box::contains");
  return (x.array() >= lower_.array()).all() && (x.array() <= upper_.array()).all();
}

bool Box::contains_interior(const Vec& x, const Vec& margin) const {
  require_same_dim(dim(), static_cast<int>(x.size()), "Box::contains_interior");
  return ((x - lower_).array() > margin.array()).all() && ((upper_ - x).array() > margin.array()).all();
}

bool Box::contains(const Box& other) const {
  require_same_dim(dim(), other.dim(), "Box::contains");
  return (other.lower_.array() >= lower_.array()).all() && (other.upper_.array() <= upper_.array()).all();
}

bool Box::intersects(const Box& other) const {
  require_same_dim(dim(), other.dim(), "Box::intersects");
  return (lower_.array() <= other.upper_.array()).all() && (other.lower_.array() <= upper_.array()).all();
}

Vec Box::clamp(const Vec& x) const {
  require_same_dim(dim(), static_cast<int>(x.size()), "Box::clamp");
  return x.cwiseMax(lower_).cwiseMin(upper_);
}

double Box::distance(const Vec& x) const { return (x - clamp(x)).norm(); }

std::vector<Vec> Box::vertices() const {
  const int n = dim();
  if (n > 20) throw std::invalid_argument("Box::vertices: dimension too large to enumerate");
  std::vector<Vec> out;
  out.reserve(std::size_t{1} << n);
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = (mask >> i) & 1u ? upper_(i) : lower_(i);
    out.push_back(std::move(v));
  }
  return out;
}

bool UnsafeRegion::contains(const Vec& x) const { return piece_containing(x) >= 0; }

bool UnsafeRegion::intersects(const Box& b) const {
  return std::any_of(pieces.begin(), pieces.end(), [&](const Box& p) { return p.intersects(b); });
}

int UnsafeRegion::piece_containing(const Vec& x) const {
  for (std::size_t i = 0; i < pieces.size(); ++i)
    if (pieces[i].contains(x)) return static_cast<int>(i);
  return -1;
}

// ---------------------------------------------------------------------------
// Zonotope

Zonotope::Zonotope(Vec center, Mat generators) : center_(std::move(center)), generators_(std::move(generators)) {
  if (generators_.cols() == 0) generators_.resize(center_.size(), 0);
  if (generators_.rows() != center_.size())
    throw DimensionError("Zonotope: generator matrix has " + std::to_string(generators_.rows()) +
                         " rows, center has dimension " + std::to_string(center_.size()));
  if (!center_.allFinite() || !generators_.allFinite())
    throw std::invalid_argument("Zonotope: non-finite center or generator entry");
}

Zonotope Zonotope::from_box(const Box& b) { return Zonotope(b.center(), Mat(b.radius().asDiagonal())).pruned(); }

Zonotope Zonotope::pruned(double tol) const {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < generators_.cols(); ++j)
    if (generators_.col(j).norm() >= tol) keep.push_back(j);
  if (keep.size() == static_cast<std::size_t>(generators_.cols())) return *this;
  Mat g(generators_.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) g.col(static_cast<Eigen::Index>(j)) = generators_.col(keep[j]);
  return Zonotope(center_, std::move(g));
}

Zonotope Zonotope::scaled(double s) const { return Zonotope(center_, s * generators_); }

Zonotope Zonotope::translated(const Vec& t) const {
  require_same_dim(dim(), static_cast<int>(t.size()), "Zonotope::translated");
  return Zonotope(center_ + t, generators_);
}

bool Zonotope::contains(const Vec& x, double tol) const {
  require_same_dim(dim(), static_cast<int>(x.size()), "Zonotope::contains");
  return bounded_feasible(generators_ * (1.0 + tol), x - center_).has_value();
}

Zonotope linear_map(const Mat& m, const Zonotope& z) {
  require_same_dim(static_cast<int>(m.cols()), z.dim(), "linear_map");
  return Zonotope(m * z.center(), m * z.generators());
}

Zonotope minkowski_sum(const Zonotope& a, const Zonotope& b) {
  require_same_dim(a.dim(), b.dim(), "minkowski_sum");
  Mat g(a.dim(), a.order() + b.order());
  g << a.generators(), b.generators();
  return Zonotope(a.center() + b.center(), std::move(g)).pruned();
}

Zonotope minkowski_sum(const Zonotope& z, const Box& b) {
  require_same_dim(z.dim(), b.dim(), "minkowski_sum");
  return minkowski_sum(z, Zonotope(b.center(), Mat(b.radius().asDiagonal())));
}

Box interval_hull(const Zonotope& z) {
  const Vec r = z.generators().cwiseAbs().rowwise().sum();
  return Box(z.center() - r, z.center() + r);
}

DifferenceResult minkowski_diff_under_detailed(const Zonotope& z, const Vec& half_widths) {
  require_same_dim(z.dim(), static_cast<int>(half_widths.size()), "minkowski_diff_under");
  if ((half_widths.array() < 0.0).any()) throw std::invalid_argument("minkowski_diff_under: negative half-width");
  const Mat& g = z.generators();
  const auto n = g.rows();
  const auto q = g.cols();
  std::vector<int> active;
  for (Eigen::Index j = 0; j < n; ++j)
    if (half_widths(j) > 0.0) active.push_back(static_cast<int>(j));
  if (active.empty()) return {z, Vec::Ones(q), false};
  if (q == 0) throw EmptySetError("minkowski_diff_under: singleton set cannot absorb a non-degenerate box");

  std::optional<Mat> gamma = Mat::Zero(q, n);
  for (int j : active) {
    Vec rhs = Vec::Zero(n);
    rhs(j) = half_widths(j);
    auto col = basis_pursuit(g, rhs);
    if (!col) {
      gamma.reset();
      break;
    }
    gamma->col(j) = *col;
  }
  if (gamma && gamma->cwiseAbs().rowwise().sum().maxCoeff() > 1.0) gamma = coupled_containment(g, half_widths, active);

  if (gamma) {
    // Slight outward padding of beta absorbs LP round-off.
    Vec beta = (gamma->cwiseAbs().rowwise().sum() * (1.0 + 1e-9)).array() + 1e-14;
    beta = beta.cwiseMin(1.0);
    Vec keep = Vec::Ones(q) - beta;
    Zonotope out(z.center(), g * keep.asDiagonal());
    return {out.pruned(), keep, false};
  }

  // Uniform fallback: the box fits in t * G B iff all its vertices do.
  double t = 0.0;
  for (const Vec& v : Box::centered(Vec::Zero(n), half_widths).vertices()) {
    t = std::max(t, zonotope_gauge(g, v));
    if (!(t <= 1.0)) break;
  }
  if (!(t <= 1.0)) {
    std::ostringstream msg;
    msg << "minkowski_diff_under: box with half-widths [" << half_widths.transpose()
        << "] does not fit inside the zonotope (gauge " << t << ")";
    throw EmptySetError(msg.str());
  }
  t = std::min(1.0, t * (1.0 + 1e-9) + 1e-14);
  Vec keep = Vec::Constant(q, 1.0 - t);
  return {Zonotope(z.center(), (1.0 - t) * g).pruned(), keep, true};
}

Zonotope minkowski_diff_under(const Zonotope& z, const Vec& half_widths) {
  return minkowski_diff_under_detailed(z, half_widths).set;
}

Zonotope minkowski_diff_under(const Zonotope& z, const Box& symmetric_box) {
  if ((symmetric_box.lower() + symmetric_box.upper()).lpNorm<Eigen::Infinity>() > 1e-12)
    throw std::invalid_argument("minkowski_diff_under: box must be symmetric about the origin");
  return minkowski_diff_under(z, symmetric_box.radius());
}

double shrink_factor(const Zonotope& z, const Box& b) {
  require_same_dim(z.dim(), b.dim(), "shrink_into_box");
  const Vec& c = z.center();
  if (!((c.array() > b.lower().array()).all() && (c.array() < b.upper().array()).all())) {
    std::ostringstream msg;
    msg << "shrink_into_box: center [" << c.transpose() << "] is not strictly inside the box";
    throw std::invalid_argument(msg.str());
  }
  const Vec hw = z.generators().cwiseAbs().rowwise().sum();
  double alpha = 1.0;
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    if (hw(j) <= 0.0) continue;
    const double slack = std::min(c(j) - b.lower()(j), b.upper()(j) - c(j));
    alpha = std::min(alpha, slack / hw(j));
  }
  // Keep c + alpha * hw inside b despite rounding in the product.
  return alpha < 1.0 ? alpha * (1.0 - 1e-12) : alpha;
}

Zonotope shrink_generators_into_box(const Zonotope& z, const Box& b) {
  const double alpha = shrink_factor(z, b);
  if (alpha >= 1.0) return z;
  const Vec& c = z.center();
  const Mat abs_g = z.generators().cwiseAbs();
  const auto n = abs_g.rows();
  const auto q = abs_g.cols();
  const Vec slack = (c - b.lower()).cwiseMin(b.upper() - c);
  // max sum_i w_i beta_i  s.t.  |G| beta + s = slack,  beta in [0,1], s >= 0,
  // with w_i the generator's hull contribution relative to the slack.
  LinearProgram lp;
  lp.a = Mat::Zero(n, q + n);
  lp.a.leftCols(q) = abs_g;
  lp.a.rightCols(n) = Mat::Identity(n, n);
  lp.b = slack;
  lp.c = Vec::Zero(q + n);
  for (Eigen::Index i = 0; i < q; ++i) lp.c(i) = -(abs_g.col(i).array() / slack.array()).sum();
  lp.lower = Vec::Zero(q + n);
  lp.upper = Vec::Constant(q + n, kInf);
  lp.upper.head(q).setOnes();
  const LpResult res = solve_lp(lp);
  Vec beta = Vec::Constant(q, alpha);
  if (res.status == LpStatus::kOptimal && -res.objective >= -lp.c.head(q).sum() * alpha) {
    beta = res.x.head(q).cwiseMax(0.0).cwiseMin(1.0);
    // Round-off in the solve may push the hull a hair past the box.
    const Vec hw = abs_g * beta;
    double excess = 1.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (hw(j) > 0.0) excess = std::min(excess, slack(j) / hw(j));
    beta *= std::min(1.0, excess) * (1.0 - 1e-12);
  }
  return Zonotope(c, z.generators() * beta.asDiagonal()).pruned();
}

Zonotope shrink_into_box(const Zonotope& z, const Box& b) {
  const double alpha = shrink_factor(z, b);
  if (alpha >= 1.0) return z;
  return z.scaled(alpha);
}

std::vector<Vec> sample(const Zonotope& z, int count, SampleMode mode, std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("sample: negative count");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(count));
  Vec b(z.order());
  for (int s = 0; s < count; ++s) {
    for (int i = 0; i < z.order(); ++i) b(i) = mode == SampleMode::kUniform ? unif(rng) : (coin(rng) ? 1.0 : -1.0);
    out.push_back(z.center() + z.generators() * b);
  }
  return out;
}

std::vector<Eigen::Vector2d> projected_outline(const Zonotope& z, int i, int j) {
  if (i < 0 || j < 0 || i >= z.dim() || j >= z.dim()) throw DimensionError("projected_outline: bad coordinates");
  const Eigen::Vector2d c(z.center()(i), z.center()(j));
  std::vector<Eigen::Vector2d> gens;
  for (int k = 0; k < z.order(); ++k) {
    Eigen::Vector2d g(z.generators()(i, k), z.generators()(j, k));
    if (g.norm() < 1e-14) continue;
    // Canonical half-plane: angle in [0, pi).
    if (g.y() < 0.0 || (g.y() == 0.0 && g.x() < 0.0)) g = -g;
    gens.push_back(g);
  }
  if (gens.empty()) return {c};
  std::sort(gens.begin(), gens.end(), [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return std::atan2(a.y(), a.x()) < std::atan2(b.y(), b.x());
  });
  Eigen::Vector2d p = c;
  for (const auto& g : gens) p -= g;
  std::vector<Eigen::Vector2d> out;
  out.reserve(2 * gens.size());
  for (const auto& g : gens) {
    out.push_back(p);
    p += 2.0 * g;
  }
  for (const auto& g : gens) {
    out.push_back(p);
    p -= 2.0 * g;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Records

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {
void write_row(std::ostream& os, const char* tag, const Vec& v) {
  os << tag;
  for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << format_double(v(i));
  os << '\n';
}
}  // namespace

void write_record(std::ostream& os, const Box& b) {
  os << "box " << b.dim() << '\n';
  write_row(os, "lower", b.lower());
  write_row(os, "upper", b.upper());
}

void write_record(std::ostream& os, const Zonotope& z) {
  os << "zonotope " << z.dim() << ' ' << z.order() << '\n';
  write_row(os, "center", z.center());
  for (int i = 0; i < z.dim(); ++i) write_row(os, "row", z.generators().row(i).transpose());
}

std::vector<std::string> RecordReader::next_tokens() {
  std::string line;
  while (std::getline(is_, line)) {
    ++line_;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
    if (!tokens.empty()) return tokens;
  }
  return {};
}

std::vector<std::string> RecordReader::expect_tokens(const std::string& what) {
  auto tokens = next_tokens();
  if (tokens.empty()) throw ParseError("unexpected end of file, expected " + what, line_ + 1);
  return tokens;
}

double RecordReader::parse_double(const std::string& token) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size())
    throw ParseError("malformed number '" + token + "'", line_);
  return v;
}

long RecordReader::parse_int(const std::string& token) {
  long v = 0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size())
    throw ParseError("malformed integer '" + token + "'", line_);
  return v;
}

Vec RecordReader::parse_vector(const std::vector<std::string>& tokens, std::size_t first, std::size_t count) {
  if (tokens.size() != first + count) {
    std::ostringstream msg;
    msg << "expected " << count << " values after '" << tokens[0] << "', found " << (tokens.size() - first);
    throw ParseError(msg.str(), line_);
  }
  Vec v(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) v(static_cast<Eigen::Index>(i)) = parse_double(tokens[first + i]);
  return v;
}

Box RecordReader::read_box() {
  auto head = expect_tokens("box record");
  if (head[0] != "box" || head.size() != 2) throw ParseError("expected 'box <n>'", line_);
  const long n = parse_int(head[1]);
  if (n < 1) throw ParseError("box dimension must be positive", line_);
  auto lo = expect_tokens("lower row");
  if (lo[0] != "lower") throw ParseError("expected 'lower'", line_);
  Vec lower = parse_vector(lo, 1, static_cast<std::size_t>(n));
  auto hi = expect_tokens("upper row");
  if (hi[0] != "upper") throw ParseError("expected 'upper'", line_);
  Vec upper = parse_vector(hi, 1, static_cast<std::size_t>(n));
  try {
    return Box(std::move(lower), std::move(upper));
  } catch (const std::exception& e) {
    throw ParseError(e.what(), line_);
  }
}

Zonotope RecordReader::read_zonotope() {
  auto head = expect_tokens("zonotope record");
  if (head[0] != "zonotope" || head.size() != 3) throw ParseError("expected 'zonotope <n> <q>'", line_);
  const long n = parse_int(head[1]);
  const long q = parse_int(head[2]);
  if (n < 1 || q < 0) throw ParseError("invalid zonotope dimensions", line_);
  auto ctr = expect_tokens("center row");
  if (ctr[0] != "center") throw ParseError("expected 'center'", line_);
  Vec c = parse_vector(ctr, 1, static_cast<std::size_t>(n));
  Mat g(n, q);
  for (long i = 0; i < n; ++i) {
    auto row = expect_tokens("generator row");
    if (row[0] != "row") throw ParseError("expected 'row'", line_);
    g.row(i) = parse_vector(row, 1, static_cast<std::size_t>(q)).transpose();
  }
  return Zonotope(std::move(c), std::move(g));
}

}  // namespace safetrack
