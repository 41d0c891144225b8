// safetrack: plan -> brs -> train -> rollout -> certify -> report.

#include "safetrack/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

struct Options {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<double> sigma;
  std::optional<double> delta;
};

safetrack::ExperimentConfig resolve_config(const Options& o) {
  namespace fs = std::filesystem;
  safetrack::ExperimentConfig cfg;
  const fs::path stored = fs::path(o.out) / safetrack::artifacts::kConfig;
  if (!o.config.empty())
    cfg = safetrack::load_config(o.config);
  else if (fs::exists(stored))
    cfg = safetrack::load_config(stored);
  else
    cfg = safetrack::parse_config("");
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (o.sigma) {
    if (*o.sigma < -1.0) throw safetrack::ConfigError("--sigma", "must be >= -1");
    cfg.sigma = *o.sigma;
  }
  if (o.delta) {
    if (!(*o.delta > 0.0 && *o.delta < 1.0)) throw safetrack::ConfigError("--delta", "must lie in (0, 1)");
    cfg.delta = *o.delta;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reach-avoid tracking controllers with conformal certificates"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "Experiment YAML (default: <out>/effective_config.yaml, else built-in)");
  app.add_option("--out", o.out, "Output directory")->capture_default_str();
  app.add_option("--seed", o.seed, "Experiment seed");
  app.add_option("--workers", o.workers, "Worker threads (0: all cores)");
  app.add_option("--sigma", o.sigma, "Initial-set enlargement for rollouts");
  app.add_option("--delta", o.delta, "Miscoverage level of the certificate");

  using Stage = void (*)(const safetrack::StageContext&);
  const std::vector<std::tuple<std::string, std::string, Stage>> stages{
      {"plan", "Plan the nominal trajectory", safetrack::stage_plan},
      {"brs", "Compute tubes and backward reachable sets", safetrack::stage_brs},
      {"train", "Train the per-step tracking controllers", safetrack::stage_train},
      {"rollout", "Simulate closed-loop rollouts", safetrack::stage_rollout},
      {"certify", "Score rollouts and compute the conformal quantile", safetrack::stage_certify},
      {"report", "Write the summary, tables, and figures", safetrack::stage_report},
      {"all", "Run every stage", safetrack::stage_all},
  };
  Stage chosen = nullptr;
  for (const auto& [name, help, fn] : stages) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&chosen, f = fn] { chosen = f; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    safetrack::StageContext ctx{resolve_config(o), o.out, &std::cout};
    chosen(ctx);
  } catch (const safetrack::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const safetrack::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
