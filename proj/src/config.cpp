#include "safetrack/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace safetrack {

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Box box(std::initializer_list<double> lo, std::initializer_list<double> hi) { return Box(vec(lo), vec(hi)); }

}  // namespace

ExperimentConfig default_config(const Vec& start) {
  constexpr double pi = std::numbers::pi;
  ExperimentConfig c;
  c.problem.operating = box({0.0, 0.0, -pi / 2}, {5.0, 2.0, pi / 2});
  c.problem.unsafe.pieces = {box({1.5, 0.0, -pi / 2}, {3.0, 0.5, pi / 2}), box({1.5, 1.0, -pi / 2}, {2.5, 2.0, pi / 2}),
                             box({3.5, 0.0, -pi / 2}, {4.5, 1.0, pi / 2})};
  c.problem.target = box({3.5, 1.5, -pi / 5}, {5.0, 2.0, pi / 5});
  c.problem.initial = Box::point(start);
  c.problem.inputs = box({-8.0, -5.0}, {8.0, 5.0});
  c.brs_disturbance = vec({0.001, 0.001, 0.005});
  c.sim_disturbance = vec({0.003, 0.003, 0.015});
  c.roles = {AxisRole::kSeparating, AxisRole::kSeparating, AxisRole::kNonSeparating};
  c.tubes.roles = c.roles;
  c.tubes.margin = c.margin;
  c.tubes.max_state_radius = vec({0.0, 0.0, 0.25});
  const DubinsCar car(c.sampling_time, Box::centered(Vec::Zero(3), c.brs_disturbance));
  c.planner = resolve_planner_params(c.planner, car, c.problem);
  return c;
}

std::unique_ptr<DynamicsModel> make_model(const ExperimentConfig& cfg) {
  if (cfg.model != "dubins") throw ConfigError("model", "unknown model '" + cfg.model + "' (available: dubins)");
  return std::make_unique<DubinsCar>(cfg.sampling_time, Box::centered(Vec::Zero(cfg.brs_disturbance.size()),
                                                                      cfg.brs_disturbance));
}

Box simulation_disturbance(const ExperimentConfig& cfg) {
  return Box::centered(Vec::Zero(cfg.sim_disturbance.size()), cfg.sim_disturbance);
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

class Parser {
 public:
  void keys(const YAML::Node& node, const std::string& path, std::set<std::string> allowed) {
    if (!node.IsMap()) throw ConfigError(path.empty() ? "<root>" : path, "expected a mapping");
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      if (!allowed.count(key)) throw ConfigError(join(path, key), "unknown key");
    }
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  double number(const YAML::Node& n, const std::string& path) {
    try {
      const double v = n.as<double>();
      if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
      return v;
    } catch (const YAML::Exception&) {
      throw ConfigError(path, "expected a number");
    }
  }

  long integer(const YAML::Node& n, const std::string& path) {
    try {
      return n.as<long>();
    } catch (const YAML::Exception&) {
      throw ConfigError(path, "expected an integer");
    }
  }

  int whole(const YAML::Node& n, const std::string& path) { return static_cast<int>(integer(n, path)); }

  std::string text(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) throw ConfigError(path, "expected a string");
    return n.as<std::string>();
  }

  Vec vector(const YAML::Node& n, const std::string& path) {
    if (!n.IsSequence()) throw ConfigError(path, "expected a list of numbers");
    Vec v(static_cast<Eigen::Index>(n.size()));
    for (std::size_t i = 0; i < n.size(); ++i)
      v(static_cast<Eigen::Index>(i)) = number(n[i], path + "[" + std::to_string(i) + "]");
    return v;
  }

  Box box(const YAML::Node& n, const std::string& path) {
    keys(n, path, {"lower", "upper"});
    if (!n["lower"] || !n["upper"]) throw ConfigError(path, "box needs 'lower' and 'upper'");
    try {
      return Box(vector(n["lower"], path + ".lower"), vector(n["upper"], path + ".upper"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(path, e.what());
    }
  }

  template <typename F>
  void opt(const YAML::Node& parent, const std::string& path, const char* key, F&& apply) {
    if (const YAML::Node n = parent[key]) apply(n, join(path, key));
  }
};

AxisRole parse_role(const std::string& s, const std::string& path) {
  if (s == "separating") return AxisRole::kSeparating;
  if (s == "non_separating") return AxisRole::kNonSeparating;
  throw ConfigError(path, "role must be 'separating' or 'non_separating'");
}

const char* role_name(AxisRole r) { return r == AxisRole::kSeparating ? "separating" : "non_separating"; }

}  // namespace

ExperimentConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("<root>", std::string("malformed YAML: ") + e.what());
  }
  ExperimentConfig c = default_config(vec({1.0, 1.0, 0.0}));
  if (!root || root.IsNull()) return c;
  Parser p;
  p.keys(root, "", {"name", "model", "sampling_time", "seed", "workers", "problem", "disturbance", "planner", "tubes",
                    "training", "verification"});
  p.opt(root, "", "name", [&](const auto& n, const auto& k) { c.name = p.text(n, k); });
  p.opt(root, "", "model", [&](const auto& n, const auto& k) { c.model = p.text(n, k); });
  p.opt(root, "", "sampling_time", [&](const auto& n, const auto& k) { c.sampling_time = p.number(n, k); });
  p.opt(root, "", "seed", [&](const auto& n, const auto& k) {
    const long s = p.integer(n, k);
    if (s < 0) throw ConfigError(k, "must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  });
  p.opt(root, "", "workers", [&](const auto& n, const auto& k) { c.workers = p.whole(n, k); });

  p.opt(root, "", "problem", [&](const YAML::Node& node, const std::string& path) {
    p.keys(node, path, {"operating", "unsafe", "target", "initial", "start", "inputs"});
    p.opt(node, path, "operating", [&](const auto& n, const auto& k) { c.problem.operating = p.box(n, k); });
    p.opt(node, path, "target", [&](const auto& n, const auto& k) { c.problem.target = p.box(n, k); });
    p.opt(node, path, "inputs", [&](const auto& n, const auto& k) { c.problem.inputs = p.box(n, k); });
    p.opt(node, path, "initial", [&](const auto& n, const auto& k) { c.problem.initial = p.box(n, k); });
    p.opt(node, path, "start", [&](const auto& n, const auto& k) {
      if (node["initial"]) throw ConfigError(k, "give either 'start' or 'initial', not both");
      c.problem.initial = Box::point(p.vector(n, k));
    });
    p.opt(node, path, "unsafe", [&](const YAML::Node& n, const std::string& k) {
      if (!n.IsSequence()) throw ConfigError(k, "expected a list of boxes");
      c.problem.unsafe.pieces.clear();
      for (std::size_t i = 0; i < n.size(); ++i)
        c.problem.unsafe.pieces.push_back(p.box(n[i], k + "[" + std::to_string(i) + "]"));
    });
  });
  p.opt(root, "", "disturbance", [&](const YAML::Node& node, const std::string& path) {
    p.keys(node, path, {"brs", "simulation"});
    p.opt(node, path, "brs", [&](const auto& n, const auto& k) { c.brs_disturbance = p.vector(n, k); });
    p.opt(node, path, "simulation", [&](const auto& n, const auto& k) { c.sim_disturbance = p.vector(n, k); });
  });
  p.opt(root, "", "planner", [&](const YAML::Node& node, const std::string& path) {
    p.keys(node, path, {"max_iterations", "goal_bias", "hold_steps", "interior_margin", "obstacle_clearance",
                        "goal_depth", "metric_weights", "min_safe_radius", "input_grid"});
    auto& pl = c.planner;
    p.opt(node, path, "max_iterations", [&](const auto& n, const auto& k) { pl.max_iterations = p.whole(n, k); });
    p.opt(node, path, "goal_bias", [&](const auto& n, const auto& k) { pl.goal_bias = p.number(n, k); });
    p.opt(node, path, "hold_steps", [&](const auto& n, const auto& k) { pl.hold_steps = p.whole(n, k); });
    p.opt(node, path, "interior_margin", [&](const auto& n, const auto& k) { pl.interior_margin = p.vector(n, k); });
    p.opt(node, path, "obstacle_clearance", [&](const auto& n, const auto& k) {
      pl.obstacle_clearance = p.vector(n, k);
    });
    p.opt(node, path, "goal_depth", [&](const auto& n, const auto& k) { pl.goal_depth = p.vector(n, k); });
    p.opt(node, path, "metric_weights", [&](const auto& n, const auto& k) { pl.metric_weights = p.vector(n, k); });
    p.opt(node, path, "min_safe_radius", [&](const auto& n, const auto& k) { c.min_safe_radius = p.number(n, k); });
    p.opt(node, path, "input_grid", [&](const YAML::Node& n, const std::string& k) {
      if (!n.IsSequence()) throw ConfigError(k, "expected a list of inputs");
      pl.input_grid.clear();
      for (std::size_t i = 0; i < n.size(); ++i)
        pl.input_grid.push_back(p.vector(n[i], k + "[" + std::to_string(i) + "]"));
    });
  });
  p.opt(root, "", "tubes", [&](const YAML::Node& node, const std::string& path) {
    p.keys(node, path,
           {"state_fraction", "input_fraction", "max_state_radius", "shrink", "budget", "tightening_passes", "gamma"});
    auto& t = c.tubes;
    p.opt(node, path, "state_fraction", [&](const auto& n, const auto& k) { t.state_fraction = p.number(n, k); });
    p.opt(node, path, "input_fraction", [&](const auto& n, const auto& k) { t.input_fraction = p.number(n, k); });
    p.opt(node, path, "max_state_radius", [&](const auto& n, const auto& k) { t.max_state_radius = p.vector(n, k); });
    p.opt(node, path, "shrink", [&](const auto& n, const auto& k) { t.shrink = p.number(n, k); });
    p.opt(node, path, "budget", [&](const auto& n, const auto& k) { t.budget = p.whole(n, k); });
    p.opt(node, path, "tightening_passes", [&](const auto& n, const auto& k) { t.tightening_passes = p.whole(n, k); });
    p.opt(node, path, "gamma", [&](const auto& n, const auto& k) { c.gamma = p.number(n, k); });
  });
  p.opt(root, "", "training", [&](const YAML::Node& node, const std::string& path) {
    p.keys(node, path, {"lambda", "alpha1", "alpha2", "uniform_samples", "extreme_samples", "train_fraction",
                        "learning_rate", "weight_decay", "validation_period", "patience", "max_epochs", "hidden",
                        "scale_init_fraction"});
    auto& t = c.training;
    p.opt(node, path, "lambda", [&](const auto& n, const auto& k) { t.loss.lambda = p.number(n, k); });
    p.opt(node, path, "alpha1", [&](const auto& n, const auto& k) { t.loss.alpha1 = p.number(n, k); });
    p.opt(node, path, "alpha2", [&](const auto& n, const auto& k) { t.loss.alpha2 = p.number(n, k); });
    p.opt(node, path, "uniform_samples", [&](const auto& n, const auto& k) { t.uniform_samples = p.whole(n, k); });
    p.opt(node, path, "extreme_samples", [&](const auto& n, const auto& k) { t.extreme_samples = p.whole(n, k); });
    p.opt(node, path, "train_fraction", [&](const auto& n, const auto& k) { t.train_fraction = p.number(n, k); });
    p.opt(node, path, "learning_rate", [&](const auto& n, const auto& k) { t.learning_rate = p.number(n, k); });
    p.opt(node, path, "weight_decay", [&](const auto& n, const auto& k) { t.weight_decay = p.number(n, k); });
    p.opt(node, path, "validation_period", [&](const auto& n, const auto& k) { t.validation_period = p.whole(n, k); });
    p.opt(node, path, "patience", [&](const auto& n, const auto& k) { t.patience = p.whole(n, k); });
    p.opt(node, path, "max_epochs", [&](const auto& n, const auto& k) { t.max_epochs = p.whole(n, k); });
    p.opt(node, path, "scale_init_fraction", [&](const auto& n, const auto& k) {
      t.scale_init_fraction = p.number(n, k);
    });
    p.opt(node, path, "hidden", [&](const YAML::Node& n, const std::string& k) {
      if (!n.IsSequence()) throw ConfigError(k, "expected a list of layer widths");
      t.hidden.clear();
      for (std::size_t i = 0; i < n.size(); ++i) {
        const long d = p.integer(n[i], k + "[" + std::to_string(i) + "]");
        if (d < 1) throw ConfigError(k, "layer widths must be positive");
        t.hidden.push_back(static_cast<int>(d));
      }
    });
  });
  p.opt(root, "", "verification", [&](const YAML::Node& node, const std::string& path) {
    p.keys(node, path, {"margin", "roles", "rollouts", "sigma", "delta"});
    p.opt(node, path, "margin", [&](const auto& n, const auto& k) { c.margin = p.number(n, k); });
    p.opt(node, path, "rollouts", [&](const auto& n, const auto& k) { c.rollouts = p.whole(n, k); });
    p.opt(node, path, "sigma", [&](const auto& n, const auto& k) { c.sigma = p.number(n, k); });
    p.opt(node, path, "delta", [&](const auto& n, const auto& k) { c.delta = p.number(n, k); });
    p.opt(node, path, "roles", [&](const YAML::Node& n, const std::string& k) {
      if (!n.IsSequence()) throw ConfigError(k, "expected a list of roles");
      c.roles.clear();
      for (std::size_t i = 0; i < n.size(); ++i) c.roles.push_back(parse_role(p.text(n[i], k), k));
    });
  });

  // Cross-field checks.
  const int n = c.problem.operating.dim();
  auto dim = [&](int d, const char* key, int want) {
    if (d != want) throw ConfigError(key, "has dimension " + std::to_string(d) + ", expected " + std::to_string(want));
  };
  if (c.model == "dubins") dim(n, "problem.operating", 3);
  dim(c.problem.target.dim(), "problem.target", n);
  dim(c.problem.initial.dim(), "problem.initial", n);
  for (const Box& b : c.problem.unsafe.pieces) dim(b.dim(), "problem.unsafe", n);
  dim(static_cast<int>(c.brs_disturbance.size()), "disturbance.brs", n);
  dim(static_cast<int>(c.sim_disturbance.size()), "disturbance.simulation", n);
  dim(static_cast<int>(c.roles.size()), "verification.roles", n);
  if (c.tubes.max_state_radius.size() != 0)
    dim(static_cast<int>(c.tubes.max_state_radius.size()), "tubes.max_state_radius", n);
  if ((c.brs_disturbance.array() < 0.0).any()) throw ConfigError("disturbance.brs", "half-widths must be >= 0");
  if ((c.sim_disturbance.array() < 0.0).any()) throw ConfigError("disturbance.simulation", "half-widths must be >= 0");
  if (!(c.sampling_time > 0.0)) throw ConfigError("sampling_time", "must be positive");
  if (!(c.gamma >= 1.0)) throw ConfigError("tubes.gamma", "must be >= 1");
  if (!(c.delta > 0.0 && c.delta < 1.0)) throw ConfigError("verification.delta", "must lie in (0, 1)");
  if (c.rollouts < 1) throw ConfigError("verification.rollouts", "must be positive");
  if (!(c.margin > 0.0)) throw ConfigError("verification.margin", "must be positive");
  c.tubes.roles = c.roles;
  c.tubes.margin = c.margin;
  try {
    const auto model = make_model(c);
    c.planner = resolve_planner_params(c.planner, *model, c.problem);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("planner", e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string(), "cannot open config file");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Emission

namespace {

void emit_vec(YAML::Emitter& out, const Vec& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (Eigen::Index i = 0; i < v.size(); ++i) out << format_double(v(i));
  out << YAML::EndSeq;
}

void emit_box(YAML::Emitter& out, const Box& b) {
  out << YAML::BeginMap << YAML::Key << "lower" << YAML::Value;
  emit_vec(out, b.lower());
  out << YAML::Key << "upper" << YAML::Value;
  emit_vec(out, b.upper());
  out << YAML::EndMap;
}

template <typename T>
void kv(YAML::Emitter& out, const char* key, const T& value) {
  out << YAML::Key << key << YAML::Value << value;
}

void kvd(YAML::Emitter& out, const char* key, double value) { kv(out, key, format_double(value)); }

void kvv(YAML::Emitter& out, const char* key, const Vec& v) {
  out << YAML::Key << key << YAML::Value;
  emit_vec(out, v);
}

}  // namespace

std::string emit_config(const ExperimentConfig& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  kv(out, "name", c.name);
  kv(out, "model", c.model);
  kvd(out, "sampling_time", c.sampling_time);
  kv(out, "seed", c.seed);
  kv(out, "workers", c.workers);

  out << YAML::Key << "problem" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "operating" << YAML::Value;
  emit_box(out, c.problem.operating);
  out << YAML::Key << "unsafe" << YAML::Value << YAML::BeginSeq;
  for (const Box& b : c.problem.unsafe.pieces) emit_box(out, b);
  out << YAML::EndSeq;
  out << YAML::Key << "target" << YAML::Value;
  emit_box(out, c.problem.target);
  out << YAML::Key << "initial" << YAML::Value;
  emit_box(out, c.problem.initial);
  out << YAML::Key << "inputs" << YAML::Value;
  emit_box(out, c.problem.inputs);
  out << YAML::EndMap;

  out << YAML::Key << "disturbance" << YAML::Value << YAML::BeginMap;
  kvv(out, "brs", c.brs_disturbance);
  kvv(out, "simulation", c.sim_disturbance);
  out << YAML::EndMap;

  out << YAML::Key << "planner" << YAML::Value << YAML::BeginMap;
  kv(out, "max_iterations", c.planner.max_iterations);
  kvd(out, "goal_bias", c.planner.goal_bias);
  kv(out, "hold_steps", c.planner.hold_steps);
  kvv(out, "interior_margin", c.planner.interior_margin);
  kvv(out, "obstacle_clearance", c.planner.obstacle_clearance);
  kvv(out, "goal_depth", c.planner.goal_depth);
  kvv(out, "metric_weights", c.planner.metric_weights);
  kvd(out, "min_safe_radius", c.min_safe_radius);
  out << YAML::Key << "input_grid" << YAML::Value << YAML::BeginSeq;
  for (const Vec& u : c.planner.input_grid) emit_vec(out, u);
  out << YAML::EndSeq;
  out << YAML::EndMap;

  out << YAML::Key << "tubes" << YAML::Value << YAML::BeginMap;
  kvd(out, "state_fraction", c.tubes.state_fraction);
  kvd(out, "input_fraction", c.tubes.input_fraction);
  kvv(out, "max_state_radius", c.tubes.max_state_radius);
  kvd(out, "shrink", c.tubes.shrink);
  kv(out, "budget", c.tubes.budget);
  kv(out, "tightening_passes", c.tubes.tightening_passes);
  kvd(out, "gamma", c.gamma);
  out << YAML::EndMap;

  const TrainConfig& t = c.training;
  out << YAML::Key << "training" << YAML::Value << YAML::BeginMap;
  kvd(out, "lambda", t.loss.lambda);
  kvd(out, "alpha1", t.loss.alpha1);
  kvd(out, "alpha2", t.loss.alpha2);
  kv(out, "uniform_samples", t.uniform_samples);
  kv(out, "extreme_samples", t.extreme_samples);
  kvd(out, "train_fraction", t.train_fraction);
  kvd(out, "learning_rate", t.learning_rate);
  kvd(out, "weight_decay", t.weight_decay);
  kv(out, "validation_period", t.validation_period);
  kv(out, "patience", t.patience);
  kv(out, "max_epochs", t.max_epochs);
  out << YAML::Key << "hidden" << YAML::Value << YAML::Flow << t.hidden;
  kvd(out, "scale_init_fraction", t.scale_init_fraction);
  out << YAML::EndMap;

  out << YAML::Key << "verification" << YAML::Value << YAML::BeginMap;
  kvd(out, "margin", c.margin);
  out << YAML::Key << "roles" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (AxisRole r : c.roles) out << role_name(r);
  out << YAML::EndSeq;
  kv(out, "rollouts", c.rollouts);
  kvd(out, "sigma", c.sigma);
  kvd(out, "delta", c.delta);
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  auto same_vecs = [](const std::vector<Vec>& x, const std::vector<Vec>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i].size() != y[i].size() || x[i] != y[i]) return false;
    return true;
  };
  auto same_vec = [](const Vec& x, const Vec& y) { return x.size() == y.size() && x == y; };
  const auto& pa = a.problem;
  const auto& pb = b.problem;
  const auto& ta = a.training;
  const auto& tb = b.training;
  return a.name == b.name && a.model == b.model && a.sampling_time == b.sampling_time && a.seed == b.seed &&
         a.workers == b.workers && pa.operating == pb.operating && pa.unsafe.pieces == pb.unsafe.pieces &&
         pa.target == pb.target && pa.initial == pb.initial && pa.inputs == pb.inputs &&
         same_vec(a.brs_disturbance, b.brs_disturbance) && same_vec(a.sim_disturbance, b.sim_disturbance) &&
         a.planner.max_iterations == b.planner.max_iterations && a.planner.goal_bias == b.planner.goal_bias &&
         a.planner.hold_steps == b.planner.hold_steps &&
         same_vec(a.planner.interior_margin, b.planner.interior_margin) &&
         same_vec(a.planner.obstacle_clearance, b.planner.obstacle_clearance) &&
         same_vec(a.planner.goal_depth, b.planner.goal_depth) &&
         same_vec(a.planner.metric_weights, b.planner.metric_weights) &&
         same_vecs(a.planner.input_grid, b.planner.input_grid) && a.min_safe_radius == b.min_safe_radius &&
         a.tubes.state_fraction == b.tubes.state_fraction && a.tubes.input_fraction == b.tubes.input_fraction &&
         same_vec(a.tubes.max_state_radius, b.tubes.max_state_radius) && a.tubes.shrink == b.tubes.shrink &&
         a.tubes.budget == b.tubes.budget &&
         a.tubes.tightening_passes == b.tubes.tightening_passes && a.gamma == b.gamma &&
         ta.loss.lambda == tb.loss.lambda && ta.loss.alpha1 == tb.loss.alpha1 && ta.loss.alpha2 == tb.loss.alpha2 &&
         ta.uniform_samples == tb.uniform_samples && ta.extreme_samples == tb.extreme_samples &&
         ta.train_fraction == tb.train_fraction && ta.learning_rate == tb.learning_rate &&
         ta.weight_decay == tb.weight_decay && ta.validation_period == tb.validation_period &&
         ta.patience == tb.patience && ta.max_epochs == tb.max_epochs && ta.hidden == tb.hidden &&
         ta.scale_init_fraction == tb.scale_init_fraction && a.margin == b.margin && a.roles == b.roles &&
         a.rollouts == b.rollouts && a.sigma == b.sigma && a.delta == b.delta;
}

}  // namespace safetrack
