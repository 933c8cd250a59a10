// Command-line front end: simulate, validate, counterexample.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nanbu/experiment.hpp"

namespace {

constexpr int kExitInvalid = 1;
constexpr int kExitViolation = 3;

int report_parse_errors(const nanbu::ParseResult& p) {
  for (const auto& e : p.errors) std::cerr << "config: " << e << '\n';
  return p.errors.empty() ? 0 : kExitInvalid;
}

int report_diagnostics(const std::vector<std::string>& diag) {
  for (const auto& e : diag) std::cerr << "invalid: " << e << '\n';
  return diag.empty() ? 0 : kExitInvalid;
}

int execute(const nanbu::ExperimentConfig& cfg) {
  if (int rc = report_diagnostics(nanbu::validate(cfg))) return rc;
  const nanbu::ScenarioResult r = nanbu::run_scenario(cfg);
  nanbu::write_artifacts(cfg, r, cfg.out);
  std::cout << "wrote " << r.table.rows.size() << " rows to " << (std::filesystem::path(cfg.out) / "results.csv").string()
            << " (config " << nanbu::config_hash(cfg) << ")\n";
  if (!r.ok) {
    std::cerr << "invariant violation: " << r.failure << '\n';
    return kExitViolation;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spherically coupled Nanbu particle systems: simulation and inequality checks"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int replicas = 0, threads = -1;
  bool renormalize = false;
  auto* sim = app.add_subcommand("simulate", "run the scenario described by a config file");
  sim->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = sim->add_option("--seed", seed, "master seed (overrides the config)");
  auto* out_opt = sim->add_option("--out", out_dir, "output directory (overrides the config)");
  auto* rep_opt = sim->add_option("--replicas", replicas, "number of replicas (overrides the config)");
  auto* thr_opt = sim->add_option("--threads", threads, "worker threads, 0 = all cores");
  sim->add_flag("--renormalize", renormalize, "re-project onto the conservation sphere at record times");

  std::string validate_path;
  auto* val = app.add_subcommand("validate", "check a config file and list every problem");
  val->add_option("--config", validate_path, "key=value config file")->required()->check(CLI::ExistingFile);

  std::string kind, grid, kernel = "atoms([(pi/2, 1)])", cex_out = "out";
  int n = 4096, d = 3, cex_replicas = 16;
  double q = 1.0;
  std::uint64_t cex_seed = 1;
  auto* cex = app.add_subcommand("counterexample", "tabulate a degeneracy counterexample along a parameter grid");
  cex->add_option("--kind", kind, "heavy_tail or radial")->required()->check(CLI::IsMember({"heavy_tail", "radial"}));
  cex->add_option("--grid", grid, "R values, or r_minus,r_plus pairs (comma separated)")->required();
  cex->add_option("--N", n, "particles per state");
  cex->add_option("--d", d, "dimension");
  cex->add_option("--replicas", cex_replicas, "states per grid point");
  cex->add_option("--seed", cex_seed, "master seed");
  cex->add_option("--q", q, "moment order for heavy_tail");
  cex->add_option("--kernel", kernel, "kernel used to scale the creation column");
  cex->add_option("--out", cex_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*val) {
      const auto p = nanbu::load_config(validate_path);
      if (int rc = report_parse_errors(p)) return rc;
      if (int rc = report_diagnostics(nanbu::validate(p.config))) return rc;
      std::cout << "ok\n";
      return 0;
    }
    if (*sim) {
      auto p = nanbu::load_config(config_path);
      if (int rc = report_parse_errors(p)) return rc;
      nanbu::ExperimentConfig cfg = p.config;
      if (*seed_opt) cfg.seed = seed;
      if (*out_opt) cfg.out = out_dir;
      if (*rep_opt) cfg.replicas = replicas;
      if (*thr_opt) cfg.threads = threads;
      if (renormalize) cfg.renormalize = true;
      return execute(cfg);
    }
    nanbu::ExperimentConfig cfg;
    cfg.scenario = "counterexample";
    cfg.kind = kind;
    cfg.n = n;
    cfg.d = d;
    cfg.replicas = cex_replicas;
    cfg.seed = cex_seed;
    cfg.q = q;
    cfg.kernel = kernel;
    cfg.out = cex_out;
    nanbu::apply_setting(cfg, "grid", grid);
    return execute(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
}
