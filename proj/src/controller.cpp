#include "safetrack/controller.hpp"

#include "safetrack/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace safetrack {

StepNet::StepNet(int step, Vec x_nom, Vec u_nom, std::vector<int> hidden)
    : step_(step), x_nom_(std::move(x_nom)), u_nom_(std::move(u_nom)), hidden_(std::move(hidden)) {
  const int n = state_dim();
  const int m = input_dim();
  if (n < 1 || m < 1) throw DimensionError("StepNet: empty state or input");
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("StepNet: layer sizes must be positive");
    blocks_.push_back({std::move(name), rows, cols, offset});
    offset += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  };
  int prev = n;
  for (std::size_t j = 0; j < hidden_.size(); ++j) {
    add(weight_name(static_cast<int>(j)), hidden_[j], prev);
    add(bias_name(static_cast<int>(j)), hidden_[j], 1);
    prev = hidden_[j];
  }
  add("mul_w", n, prev);
  add("mul_b", n, 1);
  add("out_w", m, n);
  add("scale", m, 1);
  params_.assign(offset, 0.0);
}

const StepNet::Block& StepNet::block(const std::string& name) const {
  for (const Block& b : blocks_)
    if (b.name == name) return b;
  throw std::out_of_range("StepNet: no block named " + name);
}

Vec StepNet::scale() const {
  const Block& b = blocks_.back();
  return Eigen::Map<const Vec>(params_.data() + b.offset, b.rows);
}

void StepNet::set_scale(const Vec& r) {
  const Block& b = blocks_.back();
  if (r.size() != b.rows) throw DimensionError("StepNet::set_scale: wrong size");
  Eigen::Map<Vec>(params_.data() + b.offset, b.rows) = r;
}

void StepNet::initialize(std::uint64_t seed, const Vec& scale) {
  std::mt19937_64 rng(seed);
  std::fill(params_.begin(), params_.end(), 0.0);
  for (const Block& b : blocks_) {
    if (b.cols == 1) continue;  // biases and scale
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / b.cols));
    for (int i = 0; i < b.rows * b.cols; ++i) params_[b.offset + static_cast<std::size_t>(i)] = normal(rng);
  }
  set_scale(scale);
}

namespace {

// Intermediate values of one forward pass, kept for the backward pass.
struct Tape {
  std::vector<double> h0;
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> act;
  std::vector<double> gate;
  std::vector<double> h_mul;
  std::vector<double> t;
  Vec mu;

  // Backward scratch.
  std::vector<double> g_a;
  std::vector<double> g_b;
};

void prepare(Tape& tape, const StepNet& net) {
  const std::size_t layers = net.hidden().size();
  tape.h0.resize(static_cast<std::size_t>(net.state_dim()));
  tape.pre.resize(layers);
  tape.act.resize(layers);
  for (std::size_t j = 0; j < layers; ++j) {
    tape.pre[j].resize(static_cast<std::size_t>(net.hidden()[j]));
    tape.act[j].resize(static_cast<std::size_t>(net.hidden()[j]));
  }
  tape.gate.resize(static_cast<std::size_t>(net.state_dim()));
  tape.h_mul.resize(static_cast<std::size_t>(net.state_dim()));
  tape.t.resize(static_cast<std::size_t>(net.input_dim()));
  tape.mu.resize(net.input_dim());
}

void forward(const StepNet& net, const Vec& x, Tape& tape, const KernelTable& kt) {
  const int n = net.state_dim();
  const int m = net.input_dim();
  if (x.size() != n) throw DimensionError("StepNet: input has the wrong dimension");
  const double* p = net.params().data();
  const auto& blocks = net.blocks();
  const std::size_t layers = net.hidden().size();
  for (int i = 0; i < n; ++i) tape.h0[static_cast<std::size_t>(i)] = x(i) - net.x_nom()(i);
  const double* prev = tape.h0.data();
  for (std::size_t j = 0; j < layers; ++j) {
    const auto& w = blocks[2 * j];
    const auto& b = blocks[2 * j + 1];
    kt.matvec(p + w.offset, prev, p + b.offset, tape.pre[j].data(), w.rows, w.cols);
    for (std::size_t i = 0; i < static_cast<std::size_t>(w.rows); ++i) tape.act[j][i] = std::max(tape.pre[j][i], 0.0);
    prev = tape.act[j].data();
  }
  const auto& mw = blocks[2 * layers];
  const auto& mb = blocks[2 * layers + 1];
  const auto& ow = blocks[2 * layers + 2];
  const auto& sc = blocks[2 * layers + 3];
  kt.matvec(p + mw.offset, prev, p + mb.offset, tape.gate.data(), mw.rows, mw.cols);
  for (int i = 0; i < n; ++i) {
    const auto is = static_cast<std::size_t>(i);
    tape.h_mul[is] = tape.h0[is] * tape.gate[is];
  }
  kt.matvec(p + ow.offset, tape.h_mul.data(), nullptr, tape.t.data(), ow.rows, ow.cols);
  for (int i = 0; i < m; ++i) {
    const auto is = static_cast<std::size_t>(i);
    tape.t[is] = std::tanh(tape.t[is]);
    tape.mu(i) = p[sc.offset + is] * tape.t[is] + net.u_nom()(i);
  }
}

// Accumulates d(loss)/d(params) scaled so that the upstream gradient on mu is g_mu.
void backward(const StepNet& net, const Tape& tape, const Vec& g_mu, std::vector<double>& grad, Tape& scratch,
              const KernelTable& kt) {
  const int n = net.state_dim();
  const int m = net.input_dim();
  const double* p = net.params().data();
  double* g = grad.data();
  const auto& blocks = net.blocks();
  const std::size_t layers = net.hidden().size();
  const auto& mw = blocks[2 * layers];
  const auto& mb = blocks[2 * layers + 1];
  const auto& ow = blocks[2 * layers + 2];
  const auto& sc = blocks[2 * layers + 3];

  std::vector<double>& ga = scratch.g_a;
  std::vector<double>& gb = scratch.g_b;
  ga.assign(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    const auto is = static_cast<std::size_t>(i);
    g[sc.offset + is] += g_mu(i) * tape.t[is];
    ga[is] = g_mu(i) * p[sc.offset + is] * (1.0 - tape.t[is] * tape.t[is]);
  }
  kt.rank1(g + ow.offset, ga.data(), tape.h_mul.data(), ow.rows, ow.cols);
  gb.assign(static_cast<std::size_t>(n), 0.0);
  kt.matvec_t(p + ow.offset, ga.data(), gb.data(), ow.rows, ow.cols);
  for (int i = 0; i < n; ++i) gb[static_cast<std::size_t>(i)] *= tape.h0[static_cast<std::size_t>(i)];
  const double* prev = layers ? tape.act.back().data() : tape.h0.data();
  kt.rank1(g + mw.offset, gb.data(), prev, mw.rows, mw.cols);
  for (int i = 0; i < n; ++i) g[mb.offset + static_cast<std::size_t>(i)] += gb[static_cast<std::size_t>(i)];
  if (layers == 0) return;
  ga.assign(static_cast<std::size_t>(mw.cols), 0.0);
  kt.matvec_t(p + mw.offset, gb.data(), ga.data(), mw.rows, mw.cols);
  for (std::size_t jj = layers; jj-- > 0;) {
    const auto& w = blocks[2 * jj];
    const auto& b = blocks[2 * jj + 1];
    for (int i = 0; i < w.rows; ++i) {
      const auto is = static_cast<std::size_t>(i);
      if (!(tape.pre[jj][is] > 0.0)) ga[is] = 0.0;
      g[b.offset + is] += ga[is];
    }
    const double* in = jj ? tape.act[jj - 1].data() : tape.h0.data();
    kt.rank1(g + w.offset, ga.data(), in, w.rows, w.cols);
    if (jj == 0) break;
    gb.assign(static_cast<std::size_t>(w.cols), 0.0);
    kt.matvec_t(p + w.offset, ga.data(), gb.data(), w.rows, w.cols);
    std::swap(ga, gb);
  }
}

}  // namespace

Vec StepNet::forward_raw(const Vec& x) const {
  Tape tape;
  prepare(tape, *this);
  forward(*this, x, tape, active_kernels());
  return tape.mu;
}

Vec StepNet::forward_trimmed(const Vec& x, const Box& inputs) const { return inputs.clamp(forward_raw(x)); }

// ---------------------------------------------------------------------------
// Loss

Vec tracking_coordinates(const StepNet& net, const StepTarget& target, const Vec& x) {
  return target.pinv * (target.model->step(x, net.forward_raw(x)) - target.x_next);
}

namespace {

void check_target(const StepNet& net, const StepTarget& target, const std::vector<Vec>& batch) {
  if (batch.empty()) throw std::invalid_argument("step loss: empty batch");
  if (!target.model) throw std::invalid_argument("step loss: no model");
  if (target.pinv.cols() != net.state_dim() || target.x_next.size() != net.state_dim())
    throw DimensionError("step loss: target has the wrong dimension");
}

double hinge(double s, double lambda) { return s + lambda * std::exp(std::max(s - 1.0, 0.0)); }

}  // namespace

LossValue step_loss(const StepNet& net, const StepTarget& target, const std::vector<Vec>& batch,
                    const LossWeights& weights) {
  check_target(net, target, batch);
  Tape tape;
  prepare(tape, net);
  const KernelTable& kt = active_kernels();
  double sum = 0.0;
  for (const Vec& x : batch) {
    forward(net, x, tape, kt);
    const Vec d = target.pinv * (target.model->step(x, tape.mu) - target.x_next);
    sum += hinge(d.lpNorm<Eigen::Infinity>(), weights.lambda);
  }
  LossValue v;
  v.tracking = sum / static_cast<double>(batch.size());
  v.scale = net.scale().lpNorm<1>();
  v.total = weights.alpha1 * v.tracking + weights.alpha2 * v.scale;
  return v;
}

LossValue step_loss_gradient(const StepNet& net, const StepTarget& target, const std::vector<Vec>& batch,
                             const LossWeights& weights, std::vector<double>& grad) {
  check_target(net, target, batch);
  grad.assign(net.params().size(), 0.0);
  Tape tape;
  Tape scratch;
  prepare(tape, net);
  const KernelTable& kt = active_kernels();
  const double per_sample = weights.alpha1 / static_cast<double>(batch.size());
  double sum = 0.0;
  for (const Vec& x : batch) {
    forward(net, x, tape, kt);
    const Vec d = target.pinv * (target.model->step(x, tape.mu) - target.x_next);
    Eigen::Index arg = 0;
    const double s = d.cwiseAbs().maxCoeff(&arg);
    sum += hinge(s, weights.lambda);
    const double ds = 1.0 + (s > 1.0 ? weights.lambda * std::exp(s - 1.0) : 0.0);
    const double sign = d(arg) > 0.0 ? 1.0 : (d(arg) < 0.0 ? -1.0 : 0.0);
    const Vec g_y = per_sample * ds * sign * target.pinv.row(arg).transpose();
    const Vec g_mu = target.model->jacobian_u(x, tape.mu).transpose() * g_y;
    backward(net, tape, g_mu, grad, scratch, kt);
  }
  const StepNet::Block& sc = net.blocks().back();
  const Vec r = net.scale();
  for (int i = 0; i < sc.rows; ++i) {
    const double sg = r(i) > 0.0 ? 1.0 : (r(i) < 0.0 ? -1.0 : 0.0);
    grad[sc.offset + static_cast<std::size_t>(i)] += weights.alpha2 * sg;
  }
  LossValue v;
  v.tracking = sum / static_cast<double>(batch.size());
  v.scale = r.lpNorm<1>();
  v.total = weights.alpha1 * v.tracking + weights.alpha2 * v.scale;
  return v;
}

// ---------------------------------------------------------------------------
// Baseline

BaselineResult baseline_control(const DynamicsModel& model, const Vec& x, const Box& input_tube,
                                const StepTarget& target, const BaselineParams& params) {
  const int m = input_tube.dim();
  auto objective = [&](const Vec& u) {
    return (target.pinv * (model.step(x, u) - target.x_next)).lpNorm<Eigen::Infinity>();
  };
  const Vec lo = input_tube.lower();
  const Vec width = input_tube.upper() - lo;
  const int grid = std::max(params.grid, 2);
  BaselineResult best;
  best.u = input_tube.center();
  best.objective = objective(best.u);
  std::vector<int> idx(static_cast<std::size_t>(m), 0);
  Vec u(m);
  while (true) {
    for (int i = 0; i < m; ++i) u(i) = lo(i) + width(i) * idx[static_cast<std::size_t>(i)] / (grid - 1);
    const double v = objective(u);
    if (v < best.objective) {
      best.objective = v;
      best.u = u;
    }
    int i = 0;
    while (i < m && ++idx[static_cast<std::size_t>(i)] == grid) idx[static_cast<std::size_t>(i++)] = 0;
    if (i == m) break;
  }
  // Sequential LP on the input linearization: min t s.t. |r0 + J (u - u0)| <= t,
  // u in the tube. Exact in one pass for control-affine models.
  const int q = static_cast<int>(target.pinv.rows());
  for (int pass = 0; pass < params.lp_passes; ++pass) {
    const Vec r0 = target.pinv * (model.step(x, best.u) - target.x_next);
    const Mat j = target.pinv * model.jacobian_u(x, best.u);
    const Vec ju0 = j * best.u;
    LinearProgram lp;
    const int cols = m + 1 + 2 * q;
    lp.a = Mat::Zero(2 * q, cols);
    lp.b = Vec(2 * q);
    lp.c = Vec::Zero(cols);
    lp.c(m) = 1.0;
    lp.lower = Vec::Zero(cols);
    lp.upper = Vec::Constant(cols, kInf);
    lp.lower.head(m) = lo;
    lp.upper.head(m) = input_tube.upper();
    lp.a.block(0, 0, q, m) = j;
    lp.a.block(q, 0, q, m) = -j;
    lp.a.col(m).setConstant(-1.0);
    lp.a.block(0, m + 1, 2 * q, 2 * q).setIdentity();
    lp.b.head(q) = ju0 - r0;
    lp.b.tail(q) = r0 - ju0;
    const LpResult res = solve_lp(lp);
    if (res.status != LpStatus::kOptimal) break;
    const Vec cand = input_tube.clamp(res.x.head(m));
    const double v = objective(cand);
    if (!(v < best.objective - 1e-15)) break;
    best.objective = v;
    best.u = cand;
  }
  Vec step = width / (grid - 1);
  for (int it = 0; it < params.max_iterations && step.maxCoeff() > 1e-12 * std::max(1.0, width.maxCoeff()); ++it) {
    bool improved = false;
    for (int i = 0; i < m; ++i) {
      for (double dir : {1.0, -1.0}) {
        Vec cand = best.u;
        cand(i) += dir * step(i);
        cand = input_tube.clamp(cand);
        const double v = objective(cand);
        if (v < best.objective) {
          best.objective = v;
          best.u = cand;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  best.success = best.objective <= 1.0;
  return best;
}

// ---------------------------------------------------------------------------
// Weights I/O
//
//   stepnet <k> <n> <m> <L> d1 .. dL
//   x_nom v1 .. vn
//   u_nom v1 .. vm
//   <block> <rows> <cols>      followed by `rows` rows of `cols` values

void write_stepnet(std::ostream& os, const StepNet& net) {
  os << "stepnet " << net.step() << ' ' << net.state_dim() << ' ' << net.input_dim() << ' ' << net.hidden().size();
  for (int d : net.hidden()) os << ' ' << d;
  os << '\n';
  auto row = [&os](const char* tag, const Vec& v) {
    os << tag;
    for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << format_double(v(i));
    os << '\n';
  };
  row("x_nom", net.x_nom());
  row("u_nom", net.u_nom());
  for (const auto& b : net.blocks()) {
    os << b.name << ' ' << b.rows << ' ' << b.cols << '\n';
    for (int r = 0; r < b.rows; ++r) {
      for (int c = 0; c < b.cols; ++c)
        os << (c ? " " : "") << format_double(net.params()[b.offset + static_cast<std::size_t>(r * b.cols + c)]);
      os << '\n';
    }
  }
}

StepNet read_stepnet(std::istream& is) {
  RecordReader reader(is);
  auto head = reader.expect_tokens("stepnet header");
  if (head.size() < 5 || head[0] != "stepnet")
    throw ParseError("expected 'stepnet <k> <n> <m> <L> ...'", reader.line());
  const long k = reader.parse_int(head[1]);
  const long n = reader.parse_int(head[2]);
  const long m = reader.parse_int(head[3]);
  const long layers = reader.parse_int(head[4]);
  if (n < 1 || m < 1 || layers < 0 || static_cast<long>(head.size()) != 5 + layers)
    throw ParseError("inconsistent stepnet header", reader.line());
  std::vector<int> hidden;
  for (long j = 0; j < layers; ++j)
    hidden.push_back(static_cast<int>(reader.parse_int(head[static_cast<std::size_t>(5 + j)])));
  auto xr = reader.expect_tokens("x_nom row");
  if (xr[0] != "x_nom") throw ParseError("expected 'x_nom'", reader.line());
  Vec x_nom = reader.parse_vector(xr, 1, static_cast<std::size_t>(n));
  auto ur = reader.expect_tokens("u_nom row");
  if (ur[0] != "u_nom") throw ParseError("expected 'u_nom'", reader.line());
  Vec u_nom = reader.parse_vector(ur, 1, static_cast<std::size_t>(m));
  StepNet net;
  try {
    net = StepNet(static_cast<int>(k), std::move(x_nom), std::move(u_nom), hidden);
  } catch (const std::exception& e) {
    throw ParseError(e.what(), reader.line());
  }
  for (const auto& b : net.blocks()) {
    auto bh = reader.expect_tokens("block header");
    if (bh.size() != 3 || bh[0] != b.name || reader.parse_int(bh[1]) != b.rows || reader.parse_int(bh[2]) != b.cols)
      throw ParseError("expected block '" + b.name + " " + std::to_string(b.rows) + " " + std::to_string(b.cols) + "'",
                       reader.line());
    for (int r = 0; r < b.rows; ++r) {
      auto tokens = reader.expect_tokens("block row");
      for (std::size_t c = 0; c < tokens.size(); ++c) {
        if (static_cast<int>(tokens.size()) != b.cols) throw ParseError("wrong number of values in row", reader.line());
        net.params()[b.offset + static_cast<std::size_t>(r * b.cols) + c] = reader.parse_double(tokens[c]);
      }
    }
  }
  return net;
}

void save_stepnet(const StepNet& net, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_stepnet(os, net);
}

StepNet load_stepnet(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_stepnet(is);
}

void save_controllers(const std::vector<StepNet>& nets, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
  manifest << "controllers " << nets.size() << '\n';
  for (const StepNet& net : nets) {
    char name[32];
    std::snprintf(name, sizeof(name), "step_%04d.txt", net.step());
    save_stepnet(net, dir / name);
    manifest << net.step() << ' ' << name << '\n';
  }
}

std::vector<StepNet> load_controllers(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.txt");
  if (!is) throw std::runtime_error("cannot open " + (dir / "manifest.txt").string());
  RecordReader reader(is);
  auto head = reader.expect_tokens("manifest header");
  if (head.size() != 2 || head[0] != "controllers") throw ParseError("expected 'controllers <N>'", reader.line());
  const long count = reader.parse_int(head[1]);
  std::vector<StepNet> nets;
  for (long k = 0; k < count; ++k) {
    auto entry = reader.expect_tokens("manifest entry");
    if (entry.size() != 2 || reader.parse_int(entry[0]) != k)
      throw ParseError("expected '" + std::to_string(k) + " <file>'", reader.line());
    StepNet net = load_stepnet(dir / entry[1]);
    if (net.step() != k) throw ParseError("weights file " + entry[1] + " holds the wrong step", reader.line());
    nets.push_back(std::move(net));
  }
  return nets;
}

}  // namespace safetrack
