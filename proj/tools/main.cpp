// dlsim — distributed least-squares simulation CLI.
//
// Subcommands:
//   simulate          run the configured scenario, write CSV + JSON reports
//   check-excitation  run one replication and write the excitation series
//   compare           simulate with an estimator list override
//   audit             run the invariant suite only; exit 4 on violation
//
// Exit codes: 0 success, 2 config error, 3 numerical abort, 4 audit violation.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "dlsim/errors.hpp"
#include "dlsim/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitAudit = 4;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<std::string> out_dir;
};

dlsim::ScenarioConfig load(const CommonArgs& args) {
  auto cfg = dlsim::load_config_file(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.runs) {
    if (*args.runs < 1) throw dlsim::ConfigError("--runs must be >= 1");
    cfg.replications = *args.runs;
  }
  if (args.out_dir) cfg.out_dir = *args.out_dir;
  return cfg;
}

void print_summary(const dlsim::RunReport& report) {
  std::printf("scenario=%s sensors=%d T=%g h=%g delta=%g replications=%d seed=%llu\n",
              report.scenario.c_str(), report.sensors, report.T, report.h, report.delta,
              report.replications, static_cast<unsigned long long>(report.seed));
  if (!report.assumption1_connected) {
    std::fprintf(stderr,
                 "warning: topology is disconnected; convergence guarantees void\n");
  }
  for (const auto& est : report.estimators) {
    double final_mse = 0.0;
    for (const auto& c : est.mean_curves) {
      if (!c.mse.empty()) final_mse = std::max(final_mse, c.mse.back());
    }
    std::printf("  %-14s worst final mean MSE %.6g | audit: lyap %.3g det %.3g cons %.3g\n",
                est.name.c_str(), final_mse, est.max_lyapunov_violation,
                est.max_det_violation, est.max_conservation_residual);
  }
  for (const auto& event : report.abort_events) {
    std::fprintf(stderr, "abort: %s\n", event.c_str());
  }
}

int finish(const dlsim::ScenarioConfig& cfg, const dlsim::RunReport& report,
           bool write_outputs) {
  if (write_outputs) {
    dlsim::export_csv(report, cfg.out_dir, cfg.diagnostics.per_replication_csv);
    dlsim::export_json(report, (std::filesystem::path(cfg.out_dir) / "report.json").string());
  }
  print_summary(report);
  if (report.partial) return kExitNumerical;
  if (!dlsim::audits_pass(report)) return kExitAudit;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed least-squares estimation over sensor networks"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string estimators_csv;

  auto add_common = [&](CLI::App* cmd, bool with_overrides) {
    cmd->add_option("--config", args.config_path, "scenario configuration file (JSON)")
        ->required();
    if (with_overrides) {
      cmd->add_option_function<std::uint64_t>(
          "--seed", [&](std::uint64_t s) { args.seed = s; }, "root seed override");
      cmd->add_option_function<int>(
          "--runs", [&](int r) { args.runs = r; }, "replication count override");
    }
    cmd->add_option_function<std::string>(
        "--out", [&](std::string dir) { args.out_dir = std::move(dir); },
        "output directory override");
  };

  auto* simulate = app.add_subcommand("simulate", "run the scenario and write reports");
  add_common(simulate, true);
  auto* check = app.add_subcommand("check-excitation",
                                   "single replication, excitation diagnostics only");
  add_common(check, false);
  auto* compare = app.add_subcommand("compare", "run several estimators on shared data");
  add_common(compare, true);
  compare->add_option("--estimators", estimators_csv,
                      "comma-separated list: dls,standard_ls,coop_gradient");
  auto* audit = app.add_subcommand("audit", "run the invariant suite only");
  add_common(audit, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      const auto cfg = load(args);
      return finish(cfg, dlsim::run_monte_carlo(cfg), true);
    }
    if (check->parsed()) {
      auto cfg = load(args);
      cfg.replications = 1;
      cfg.estimators = {dlsim::EstimatorKind::Dls};
      const auto report = dlsim::run_monte_carlo(cfg);
      dlsim::export_csv(report, cfg.out_dir, false);
      dlsim::export_json(report,
                         (std::filesystem::path(cfg.out_dir) / "report.json").string());
      std::printf("excitation: %zu epochs, trend %.4g, hint %s\n",
                  report.excitation.t.size(), report.excitation.trend,
                  report.excitation.satisfied_hint ? "true" : "false");
      return report.partial ? kExitNumerical : kExitOk;
    }
    if (compare->parsed()) {
      auto cfg = load(args);
      if (!estimators_csv.empty()) {
        cfg.estimators.clear();
        std::stringstream ss(estimators_csv);
        std::string token;
        while (std::getline(ss, token, ',')) {
          if (token == "dls") cfg.estimators.push_back(dlsim::EstimatorKind::Dls);
          else if (token == "standard_ls") cfg.estimators.push_back(dlsim::EstimatorKind::StandardLs);
          else if (token == "coop_gradient") cfg.estimators.push_back(dlsim::EstimatorKind::CoopGradient);
          else throw dlsim::ConfigError("unknown estimator '" + token + "'");
        }
      }
      return finish(cfg, dlsim::run_monte_carlo(cfg), true);
    }
    if (audit->parsed()) {
      const auto cfg = load(args);
      const auto report = dlsim::run_monte_carlo(cfg);
      print_summary(report);
      if (report.partial) return kExitNumerical;
      if (!dlsim::audits_pass(report)) {
        std::fprintf(stderr, "audit violation above tolerance\n");
        return kExitAudit;
      }
      std::printf("audit clean\n");
      return kExitOk;
    }
  } catch (const dlsim::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const dlsim::NumericalAbort& e) {
    std::fprintf(stderr, "numerical abort: %s (t=%g, sensor %d)\n", e.what(), e.t,
                 e.sensor);
    return kExitNumerical;
  }
  return kExitOk;
}
