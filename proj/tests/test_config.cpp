#include "support.hpp"

#include <doctest.h>

#include <numbers>

using namespace safetrack;
using namespace testing;

namespace {

std::string config_error_key(const std::string& yaml) {
  try {
    parse_config(yaml);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<none>";
}

}  // namespace

TEST_CASE("defaults describe the Dubins instance") {
  const ExperimentConfig c = parse_config("");
  constexpr double pi = std::numbers::pi;
  CHECK(c.model == "dubins");
  CHECK(c.sampling_time == 0.05);
  CHECK(c.problem.operating.lower() == vec({0, 0, -pi / 2}));
  CHECK(c.problem.operating.upper() == vec({5, 2, pi / 2}));
  REQUIRE(c.problem.unsafe.pieces.size() == 3);
  CHECK(c.problem.unsafe.pieces[0].upper().head(2) == vec({3, 0.5}));
  CHECK(c.problem.unsafe.pieces[1].lower().head(2) == vec({1.5, 1}));
  CHECK(c.problem.unsafe.pieces[2].lower().head(2) == vec({3.5, 0}));
  CHECK(c.problem.target.lower() == vec({3.5, 1.5, -pi / 5}));
  CHECK(c.problem.target.upper() == vec({5, 2, pi / 5}));
  CHECK(c.problem.initial.lower() == vec({1, 1, 0}));
  CHECK(c.problem.initial.upper() == vec({1, 1, 0}));
  CHECK(c.problem.inputs.upper() == vec({8, 5}));
  // W = tau_s * ([-0.02, 0.02]^2 x [-0.1, 0.1]); simulation runs three times wider.
  CHECK((c.brs_disturbance - 0.05 * vec({0.02, 0.02, 0.1})).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((c.sim_disturbance - 3.0 * c.brs_disturbance).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(c.gamma == 1.1);
  CHECK(c.margin == 0.01);
  CHECK(c.delta == 0.001);
  CHECK(c.rollouts == 1000);
  CHECK(c.roles == std::vector<AxisRole>{AxisRole::kSeparating, AxisRole::kSeparating, AxisRole::kNonSeparating});
  CHECK(c.training.loss.lambda == 0.1);
  CHECK(c.training.loss.alpha1 == 10.0);
  CHECK(c.training.loss.alpha2 == 0.01);
  CHECK(c.training.hidden == std::vector<int>{32, 32, 32, 32});
  CHECK(check_problem(c.problem).empty());
}

TEST_CASE("emit and parse round-trip") {
  ExperimentConfig c = parse_config("seed: 17\nverification: {sigma: 0.2, delta: 0.05}\ntraining: {hidden: [7, 5]}\n");
  CHECK(c.seed == 17);
  CHECK(c.sigma == 0.2);
  CHECK(c.training.hidden == std::vector<int>{7, 5});
  CHECK(parse_config(emit_config(c)) == c);
  const ExperimentConfig d = parse_config("");
  CHECK(parse_config(emit_config(d)) == d);
  CHECK_FALSE(c == d);
}

TEST_CASE("errors carry the dotted key path") {
  CHECK(config_error_key("problem:\n  targt: {lower: [0,0,0], upper: [1,1,1]}\n") == "problem.targt");
  CHECK(config_error_key("training:\n  hidden: [4, -1]\n") == "training.hidden");
  CHECK(config_error_key("verification:\n  delta: 1.5\n") == "verification.delta");
  CHECK(config_error_key("tubes: {gamma: 0.5}\n") == "tubes.gamma");
  CHECK(config_error_key("seed: abc\n") == "seed");
  CHECK(config_error_key("problem:\n  unsafe:\n    - {lower: [0, 0], upper: [1, 1, 1]}\n") == "problem.unsafe[0]");
  CHECK(config_error_key("disturbance: {brs: [0.1, 0.1]}\n") == "disturbance.brs");
  CHECK(config_error_key("model: unicycle\n") == "model");
  CHECK(config_error_key("verification: {roles: [separating, sideways, separating]}\n") == "verification.roles");
  CHECK(config_error_key("a: [1, 2\n") == "<root>");
  CHECK(config_error_key("name: x\n") == "<none>");
}

TEST_CASE("shipped configs") {
  const std::filesystem::path dir = std::filesystem::path(SAFETRACK_SOURCE_DIR) / "configs";
  const ExperimentConfig a = load_config(dir / "dubins_1_1_0.yaml");
  CHECK(a.problem.initial.lower() == vec({1, 1, 0}));
  CHECK(a.problem.initial.upper() == vec({1, 1, 0}));
  CHECK(check_problem(a.problem).empty());

  const ExperimentConfig b = load_config(dir / "dubins_4_05.yaml");
  CHECK(b.problem.initial.lower()(2) == doctest::Approx(-std::numbers::pi / 4));
  // This start lies inside the third unsafe box.
  const auto issues = check_problem(b.problem);
  REQUIRE(issues.size() == 1);
  CHECK(issues[0].find("unsafe piece 2") != std::string::npos);

  CHECK_THROWS_AS(load_config(dir / "no_such_file.yaml"), ConfigError);
}
