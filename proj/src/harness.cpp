#include "dlsim/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dlsim/errors.hpp"

namespace dlsim {

using nlohmann::json;

bool SensorCurve::operator==(const SensorCurve& other) const {
  return sensor == other.sensor && t == other.t && mse == other.mse &&
         theta_err_norm == other.theta_err_norm &&
         final_theta.size() == other.final_theta.size() &&
         [&] {
           for (int i = 0; i < final_theta.size(); ++i) {
             if (final_theta(i) != other.final_theta(i)) return false;
           }
           return true;
         }();
}

std::string estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Dls: return "dls";
    case EstimatorKind::StandardLs: return "standard_ls";
    case EstimatorKind::CoopGradient: return "coop_gradient";
  }
  return "?";
}

namespace {

bool bitwise_equal(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) return false;
  for (int i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) return false;
  }
  return true;
}

EstimatorKind estimator_kind(const std::string& name) {
  if (name == "dls") return EstimatorKind::Dls;
  if (name == "standard_ls") return EstimatorKind::StandardLs;
  if (name == "coop_gradient") return EstimatorKind::CoopGradient;
  throw ConfigError("unknown estimator '" + name + "'");
}

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& context) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("unknown key '" + it.key() + "' in " + context);
    }
  }
}

double require_number(const json& obj, const std::string& key) {
  if (!obj.contains(key)) throw ConfigError("missing required key '" + key + "'");
  if (!obj[key].is_number()) throw ConfigError("'" + key + "' must be a number");
  return obj[key].get<double>();
}

Waveform parse_waveform(const json& w, const std::string& context) {
  if (!w.is_object()) throw ConfigError(context + " must be an object");
  check_keys(w, {"sin", "poly"}, context);
  Waveform wf;
  if (w.contains("sin")) {
    for (const auto& term : w["sin"]) {
      if (!term.is_array() || term.size() != 3) {
        throw ConfigError(context + ": each sin term is [amplitude, frequency, phase]");
      }
      wf.sins.push_back({term[0].get<double>(), term[1].get<double>(),
                         term[2].get<double>()});
    }
  }
  if (w.contains("poly")) {
    for (const auto& c : w["poly"]) wf.poly.push_back(c.get<double>());
  }
  return wf;
}

std::vector<double> parse_coeffs(const json& arr, const std::string& key) {
  if (!arr.is_array()) throw ConfigError("'" + key + "' must be a coefficient array");
  std::vector<double> out;
  for (const auto& c : arr) out.push_back(c.get<double>());
  return out;
}

// Shortest round-trip formatting for CSV cells.
std::string fmt(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

std::vector<std::pair<int, int>> default_ring_edges(int nodes) {
  std::vector<std::pair<int, int>> edges;
  if (nodes < 2) return edges;
  if (nodes == 2) return {{1, 2}};
  for (int i = 1; i <= nodes; ++i) edges.emplace_back(i, i % nodes + 1);
  return edges;
}

std::vector<std::pair<int, int>> synthetic12_default_edges() {
  auto edges = default_ring_edges(12);
  edges.emplace_back(1, 7);
  edges.emplace_back(4, 10);
  return edges;
}

int ScenarioConfig::stride_steps() const {
  if (diagnostics.full_resolution) return 1;
  return std::max(1, static_cast<int>(std::llround(stride_seconds / h)));
}

PlantScenario ScenarioConfig::make_scenario() const {
  PlantScenario sc;
  if (scenario == "rlc") {
    sc = rlc_scenario(rlc_R, rlc_L, rlc_C, inputs);
    if (noise == NoiseMode::Regressor) {
      throw ConfigError("the rlc scenario supports noise off|wiener");
    }
    sc.noise = noise;
  } else if (scenario == "synthetic12") {
    sc = synthetic12_scenario();
    sc.noise = noise;
  } else if (scenario == "custom") {
    if (inputs.empty()) throw ConfigError("custom scenario requires 'inputs'");
    if (noise == NoiseMode::Regressor) {
      throw ConfigError("regressor noise is specific to the synthetic12 scenario");
    }
    sc.kind = PlantKind::General;
    sc.sensors = static_cast<int>(inputs.size());
    sc.inputs = inputs;
    sc.a = PolynomialInS::monic(poly_a);
    sc.b = PolynomialInS::direct(poly_b);
    sc.c = PolynomialInS::monic(poly_c);
    sc.d = PolynomialInS::monic(poly_d);
    sc.theta = assemble_theta(sc.a, sc.b, sc.c);
    sc.noise = noise;
  } else {
    throw ConfigError("unknown scenario '" + scenario + "'");
  }
  if (theta0.size() != 0 && theta0.size() != sc.dim()) {
    throw ConfigError("theta0 has dimension " + std::to_string(theta0.size()) +
                      ", scenario needs " + std::to_string(sc.dim()));
  }
  return sc;
}

NetworkTopology ScenarioConfig::make_topology() const {
  return build_topology(nodes, edges);
}

Eigen::MatrixXd ScenarioConfig::make_weights(const NetworkTopology& topology) const {
  if (weight_rule == "metropolis") return metropolis_weights(topology);
  if (weight_rule == "explicit") {
    if (!explicit_weights) throw ConfigError("weight_rule 'explicit' requires 'weights'");
    const auto& w = *explicit_weights;
    if (w.rows() != topology.node_count || w.cols() != topology.node_count) {
      throw ConfigError("explicit weight matrix size mismatch");
    }
    for (int i = 0; i < w.rows(); ++i) {
      if (std::abs(w.row(i).sum() - 1.0) > 1e-12 || std::abs(w.col(i).sum() - 1.0) > 1e-12) {
        throw ConfigError("explicit weights must be doubly stochastic (1e-12)");
      }
    }
    return w;
  }
  throw ConfigError("unknown weight_rule '" + weight_rule + "'");
}

ScenarioConfig load_config_json(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be a JSON object");

  check_keys(root,
             {"scenario", "nodes", "edges", "weight_rule", "weights", "T", "h", "delta",
              "replications", "seed", "estimators", "gains", "theta0", "alpha", "noise",
              "rlc", "inputs", "model", "out_dir", "stride", "diagnostics"},
             "config");

  ScenarioConfig cfg;
  if (!root.contains("scenario") || !root["scenario"].is_string()) {
    throw ConfigError("config needs a 'scenario' string (rlc|synthetic12|custom)");
  }
  cfg.scenario = root["scenario"].get<std::string>();
  cfg.T = require_number(root, "T");
  cfg.h = require_number(root, "h");
  cfg.delta = require_number(root, "delta");
  if (!(cfg.h > 0.0) || !(cfg.delta > 0.0) || !(cfg.T > 0.0)) {
    throw ConfigError("T, h and delta must be positive");
  }

  if (root.contains("replications")) {
    cfg.replications = root["replications"].get<int>();
    if (cfg.replications < 1) throw ConfigError("replications must be >= 1");
  }
  if (root.contains("seed")) cfg.seed = root["seed"].get<std::uint64_t>();
  if (root.contains("alpha")) {
    cfg.alpha = root["alpha"].get<double>();
    if (!(cfg.alpha > 0.0)) throw ConfigError("alpha must be positive");
  }
  if (root.contains("out_dir")) cfg.out_dir = root["out_dir"].get<std::string>();
  if (root.contains("stride")) {
    cfg.stride_seconds = root["stride"].get<double>();
    if (!(cfg.stride_seconds > 0.0)) throw ConfigError("stride must be positive");
  }

  if (root.contains("estimators")) {
    cfg.estimators.clear();
    for (const auto& e : root["estimators"]) {
      cfg.estimators.push_back(estimator_kind(e.get<std::string>()));
    }
  }
  if (root.contains("gains")) {
    check_keys(root["gains"], {"gamma", "beta"}, "gains");
    if (root["gains"].contains("gamma")) cfg.gains.gamma = root["gains"]["gamma"].get<double>();
    if (root["gains"].contains("beta")) cfg.gains.beta = root["gains"]["beta"].get<double>();
  }
  if (root.contains("theta0")) {
    const auto v = parse_coeffs(root["theta0"], "theta0");
    cfg.theta0 = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
  }

  std::string noise = cfg.scenario == "synthetic12" ? "regressor" : "off";
  if (root.contains("noise")) noise = root["noise"].get<std::string>();
  if (noise == "off") cfg.noise = NoiseMode::Off;
  else if (noise == "wiener") cfg.noise = NoiseMode::Wiener;
  else if (noise == "regressor") cfg.noise = NoiseMode::Regressor;
  else throw ConfigError("noise must be off|wiener|regressor");

  if (root.contains("rlc")) {
    check_keys(root["rlc"], {"R", "L", "C"}, "rlc");
    if (root["rlc"].contains("R")) cfg.rlc_R = root["rlc"]["R"].get<double>();
    if (root["rlc"].contains("L")) cfg.rlc_L = root["rlc"]["L"].get<double>();
    if (root["rlc"].contains("C")) cfg.rlc_C = root["rlc"]["C"].get<double>();
  }
  if (root.contains("inputs")) {
    int index = 0;
    for (const auto& w : root["inputs"]) {
      cfg.inputs.push_back(parse_waveform(w, "inputs[" + std::to_string(index++) + "]"));
    }
  }
  if (root.contains("model")) {
    check_keys(root["model"], {"a", "b", "c", "d"}, "model");
    const auto& model = root["model"];
    if (model.contains("a")) cfg.poly_a = parse_coeffs(model["a"], "a");
    if (model.contains("b")) cfg.poly_b = parse_coeffs(model["b"], "b");
    if (model.contains("c")) cfg.poly_c = parse_coeffs(model["c"], "c");
    if (model.contains("d")) cfg.poly_d = parse_coeffs(model["d"], "d");
  }

  if (root.contains("diagnostics")) {
    const auto& d = root["diagnostics"];
    check_keys(d,
               {"per_replication_csv", "include_timing", "full_resolution",
                "oracle_compare", "pe_T0", "pe_alpha", "cec_window", "cec_threshold"},
               "diagnostics");
    auto& toggles = cfg.diagnostics;
    if (d.contains("per_replication_csv")) toggles.per_replication_csv = d["per_replication_csv"].get<bool>();
    if (d.contains("include_timing")) toggles.include_timing = d["include_timing"].get<bool>();
    if (d.contains("full_resolution")) toggles.full_resolution = d["full_resolution"].get<bool>();
    if (d.contains("oracle_compare")) toggles.oracle_compare = d["oracle_compare"].get<bool>();
    if (d.contains("pe_T0")) toggles.pe_T0 = d["pe_T0"].get<double>();
    if (d.contains("pe_alpha")) toggles.pe_alpha = d["pe_alpha"].get<double>();
    if (d.contains("cec_window")) toggles.cec_window = d["cec_window"].get<int>();
    if (d.contains("cec_threshold")) toggles.cec_threshold = d["cec_threshold"].get<double>();
  }

  // Topology: scenario defaults, overridable.
  int default_nodes = 0;
  if (cfg.scenario == "rlc") default_nodes = cfg.inputs.empty() ? 6 : static_cast<int>(cfg.inputs.size());
  else if (cfg.scenario == "synthetic12") default_nodes = 12;
  else default_nodes = static_cast<int>(cfg.inputs.size());
  cfg.nodes = root.contains("nodes") ? root["nodes"].get<int>() : default_nodes;
  if (root.contains("edges")) {
    for (const auto& e : root["edges"]) {
      if (!e.is_array() || e.size() != 2) throw ConfigError("edges are two-element arrays");
      cfg.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
  } else if (cfg.scenario == "synthetic12") {
    cfg.edges = synthetic12_default_edges();
  } else {
    cfg.edges = default_ring_edges(cfg.nodes);
  }

  if (root.contains("weight_rule")) cfg.weight_rule = root["weight_rule"].get<std::string>();
  if (root.contains("weights")) {
    const auto& warr = root["weights"];
    const int n = static_cast<int>(warr.size());
    Eigen::MatrixXd w(n, n);
    for (int i = 0; i < n; ++i) {
      if (static_cast<int>(warr[i].size()) != n) throw ConfigError("weights must be square");
      for (int j = 0; j < n; ++j) w(i, j) = warr[i][j].get<double>();
    }
    cfg.explicit_weights = w;
  }

  // Validate the grid ratios and the scenario assembly now so a bad file
  // fails at load time, not replications later.
  const PlantScenario sc = cfg.make_scenario();
  if (cfg.nodes != sc.sensors) {
    throw ConfigError("nodes (" + std::to_string(cfg.nodes) + ") must equal the sensor count (" +
                      std::to_string(sc.sensors) + ")");
  }
  const FusionSchedule sched = cfg.make_schedule();
  sched.epochs();
  sched.steps_per_window(cfg.h);
  const NetworkTopology topo = cfg.make_topology();
  cfg.make_weights(topo);
  return cfg;
}

ScenarioConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_config_json(buffer.str());
}

namespace {

struct CurveAccumulator {
  std::vector<double> t;
  std::vector<double> mse_sum;
  std::vector<double> norm_sum;
  Eigen::VectorXd final_sum;
  int count = 0;
};

SensorCurve curve_from_history(const EstimateHistory& hist, int sensor) {
  SensorCurve curve;
  curve.sensor = sensor + 1;
  const auto& trace = hist.traces[sensor];
  curve.t = trace.t;
  curve.mse.reserve(trace.t.size());
  curve.theta_err_norm.reserve(trace.t.size());
  for (const auto& th : trace.theta) {
    const double err = (th - hist.theta_true).norm();
    curve.theta_err_norm.push_back(err);
    curve.mse.push_back(err * err);
  }
  curve.final_theta = hist.final_theta[sensor];
  return curve;
}

AuditRow audit_row_from_history(const EstimateHistory& hist, int replication) {
  AuditRow row;
  row.replication = replication;
  for (const auto& a : hist.audits) {
    row.max_lyapunov_violation =
        std::max(row.max_lyapunov_violation, a.lyapunov_after - a.lyapunov_before);
    row.max_det_violation =
        std::max(row.max_det_violation, a.logdet_before - a.logdet_after);
    row.conservation_residual =
        std::max(row.conservation_residual, a.conservation_residual);
  }
  return row;
}

}  // namespace

RunReport run_monte_carlo(const ScenarioConfig& config) {
  const auto clock_start = std::chrono::steady_clock::now();
  const PlantScenario sc = config.make_scenario();
  const NetworkTopology topo = config.make_topology();
  const Eigen::MatrixXd weights = config.make_weights(topo);
  const FusionSchedule schedule = config.make_schedule();

  RunOptions opts;
  opts.theta0 = config.theta0;
  opts.alpha = config.alpha;
  opts.stride = config.stride_steps();

  RunReport report;
  report.scenario = config.scenario;
  report.sensors = sc.sensors;
  report.T = config.T;
  report.h = config.h;
  report.delta = config.delta;
  report.replications = config.replications;
  report.seed = config.seed;
  report.assumption1_connected = topo.connected;
  report.theta_true = sc.theta;
  report.include_timing = config.diagnostics.include_timing;

  const std::size_t n_estimators = config.estimators.size();
  report.estimators.resize(n_estimators);
  std::vector<std::vector<CurveAccumulator>> accumulators(n_estimators);
  for (std::size_t e = 0; e < n_estimators; ++e) {
    report.estimators[e].name = estimator_name(config.estimators[e]);
    accumulators[e].resize(sc.sensors);
  }

  bool excitation_captured = false;
  for (int rep = 0; rep < config.replications; ++rep) {
    Trajectories traj;
    try {
      NoiseStream stream(config.seed, static_cast<std::uint64_t>(rep), config.h);
      traj = simulate_network(sc, stream, config.T);
    } catch (const NumericalAbort& abort) {
      report.partial = true;
      report.abort_events.push_back("replication " + std::to_string(rep) +
                                    ": plant: " + abort.what() + " (t=" + fmt(abort.t) +
                                    ", sensor " + std::to_string(abort.sensor) + ")");
      continue;
    }

    for (std::size_t e = 0; e < n_estimators; ++e) {
      EstimateHistory hist;
      try {
        switch (config.estimators[e]) {
          case EstimatorKind::Dls:
            hist = run_dls_on(traj, sc.d, weights, schedule, opts, topo.diameter);
            break;
          case EstimatorKind::StandardLs:
            hist = run_standard_ls_on(traj, sc.d, schedule, opts);
            break;
          case EstimatorKind::CoopGradient:
            hist = run_coop_gradient_on(traj, weights, config.gains, schedule, opts);
            break;
        }
      } catch (const NumericalAbort& abort) {
        report.partial = true;
        report.abort_events.push_back(
            "replication " + std::to_string(rep) + ": " + report.estimators[e].name +
            ": " + abort.what() + " (t=" + fmt(abort.t) + ", sensor " +
            std::to_string(abort.sensor) + ")");
        continue;
      }
      report.step_count += hist.step_count;

      auto& est_report = report.estimators[e];
      est_report.per_replication.resize(
          std::max(est_report.per_replication.size(), static_cast<std::size_t>(rep) + 1));
      for (int i = 0; i < sc.sensors; ++i) {
        SensorCurve curve = curve_from_history(hist, i);
        auto& acc = accumulators[e][i];
        if (acc.count == 0) {
          acc.t = curve.t;
          acc.mse_sum.assign(curve.t.size(), 0.0);
          acc.norm_sum.assign(curve.t.size(), 0.0);
          acc.final_sum = Eigen::VectorXd::Zero(hist.dim);
        }
        for (std::size_t k = 0; k < curve.t.size(); ++k) {
          acc.mse_sum[k] += curve.mse[k];
          acc.norm_sum[k] += curve.theta_err_norm[k];
        }
        acc.final_sum += curve.final_theta;
        acc.count += 1;
        est_report.per_replication[rep].push_back(std::move(curve));
      }

      if (!hist.audits.empty()) {
        est_report.audit_rows.push_back(audit_row_from_history(hist, rep));
        const auto& row = est_report.audit_rows.back();
        est_report.max_lyapunov_violation =
            std::max(est_report.max_lyapunov_violation, row.max_lyapunov_violation);
        est_report.max_det_violation =
            std::max(est_report.max_det_violation, row.max_det_violation);
        est_report.max_conservation_residual =
            std::max(est_report.max_conservation_residual, row.conservation_residual);
        for (const auto& a : hist.audits) {
          est_report.max_consistency_residual =
              std::max(est_report.max_consistency_residual, a.consistency_residual);
          est_report.max_info_increment_residual =
              std::max(est_report.max_info_increment_residual, a.info_increment_residual);
        }
      }

      if (!excitation_captured && config.estimators[e] != EstimatorKind::CoopGradient) {
        excitation_captured = true;
        const ExcitationSeries series = excitation_series(hist);
        auto& exc = report.excitation;
        exc.t = series.t;
        exc.R = series.R;
        exc.lambda_min = series.lambda_min;
        exc.log_ratio = series.log_ratio;
        exc.r_at_tn = series.r_at_tn;
        exc.sensor_ratio = series.sensor_ratio;
        int window = config.diagnostics.cec_window;
        if (window <= 0) window = series.epochs / 2;
        if (window >= 2 && series.epochs >= 2 * window) {
          const CecVerdict verdict =
              cec_verdict(series, window, config.diagnostics.cec_threshold);
          exc.trend = verdict.trend;
          exc.satisfied_hint = verdict.satisfied_hint;
        }
        const auto pe = pe_window_check(traj, config.diagnostics.pe_T0,
                                        config.diagnostics.pe_alpha);
        exc.pe_window_pass.resize(series.epochs, 0);
        for (int n = 0; n < series.epochs; ++n) {
          const int completed =
              static_cast<int>(std::floor(series.t[n] / config.diagnostics.pe_T0 + 1e-9)) - 1;
          exc.pe_window_pass[n] =
              (completed >= 0 && completed < static_cast<int>(pe.size()) && pe[completed])
                  ? 1 : 0;
        }
      }
    }
  }

  for (std::size_t e = 0; e < n_estimators; ++e) {
    for (int i = 0; i < sc.sensors; ++i) {
      const auto& acc = accumulators[e][i];
      if (acc.count == 0) continue;
      SensorCurve mean;
      mean.sensor = i + 1;
      mean.t = acc.t;
      mean.mse.resize(acc.t.size());
      mean.theta_err_norm.resize(acc.t.size());
      for (std::size_t k = 0; k < acc.t.size(); ++k) {
        mean.mse[k] = acc.mse_sum[k] / acc.count;
        mean.theta_err_norm[k] = acc.norm_sum[k] / acc.count;
      }
      mean.final_theta = acc.final_sum / acc.count;
      report.estimators[e].mean_curves.push_back(std::move(mean));
    }
  }

  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return report;
}

bool audits_pass(const RunReport& report, const AuditTolerances& tol) {
  for (const auto& est : report.estimators) {
    if (est.max_lyapunov_violation > tol.lyapunov) return false;
    if (est.max_det_violation > tol.determinant) return false;
    if (est.max_conservation_residual > tol.conservation) return false;
  }
  return true;
}

std::vector<Eigen::VectorXd> normal_equation_oracle(const Trajectories& traj,
                                                    const Eigen::MatrixXd& weights,
                                                    const FusionSchedule& schedule,
                                                    int epoch_n, double t, double alpha,
                                                    bool include_prior) {
  const int sensors = static_cast<int>(traj.y.size());
  const int dim = traj.layout.dim;
  const int per_window = schedule.steps_per_window(traj.h);
  const int t_steps = static_cast<int>(std::llround(t / traj.h));
  if (epoch_n < 0 || t_steps < epoch_n * per_window || t_steps > traj.samples - 1) {
    throw ConfigError("oracle time t must lie in [t_n, horizon]");
  }

  std::vector<std::vector<Eigen::MatrixXd>> window_outer(
      epoch_n, std::vector<Eigen::MatrixXd>(sensors, Eigen::MatrixXd::Zero(dim, dim)));
  std::vector<std::vector<Eigen::VectorXd>> window_cross(
      epoch_n, std::vector<Eigen::VectorXd>(sensors, Eigen::VectorXd::Zero(dim)));
  std::vector<Eigen::MatrixXd> part_outer(sensors, Eigen::MatrixXd::Zero(dim, dim));
  std::vector<Eigen::VectorXd> part_cross(sensors, Eigen::VectorXd::Zero(dim));

  for (int j = 0; j < sensors; ++j) {
    RegressorStream stream(traj, j);
    for (int m = 0; m < t_steps; ++m) {
      const Eigen::VectorXd phi = stream.next();
      const double dy = traj.y[j][m + 1] - traj.y[j][m];
      if (m < epoch_n * per_window) {
        const int k = m / per_window;
        window_outer[k][j].noalias() += (phi * phi.transpose()) * traj.h;
        window_cross[k][j].noalias() += phi * dy;
      } else {
        part_outer[j].noalias() += (phi * phi.transpose()) * traj.h;
        part_cross[j].noalias() += phi * dy;
      }
    }
  }

  // Weight powers a_ij^(m) for m = 1 .. n+1.
  std::vector<Eigen::MatrixXd> powers(epoch_n + 2);
  powers[0] = Eigen::MatrixXd::Identity(sensors, sensors);
  for (int m = 1; m <= epoch_n + 1; ++m) powers[m] = powers[m - 1] * weights;

  std::vector<Eigen::VectorXd> estimates(sensors);
  for (int i = 0; i < sensors; ++i) {
    Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(dim, dim);
    if (include_prior) normal = Eigen::MatrixXd::Identity(dim, dim) * (1.0 / alpha);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    for (int k = 0; k < epoch_n; ++k) {
      const auto& pw = powers[epoch_n - k + 1];
      for (int j = 0; j < sensors; ++j) {
        const double a = pw(i, j);
        if (a == 0.0) continue;
        normal.noalias() += a * window_outer[k][j];
        rhs.noalias() += a * window_cross[k][j];
      }
    }
    normal += part_outer[i];
    rhs += part_cross[i];
    Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    estimates[i] = ldlt.solve(rhs);
    if (!estimates[i].allFinite()) {
      throw NumericalAbort("oracle normal equations singular", t, i + 1);
    }
  }
  return estimates;
}

// ---------------------------------------------------------------------------
// Export / import

namespace {

json to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v(i) = arr[i].get<double>();
  return v;
}

json to_json(const SensorCurve& c) {
  return json{{"sensor", c.sensor},
              {"t", c.t},
              {"mse", c.mse},
              {"theta_err_norm", c.theta_err_norm},
              {"final_theta", to_json(c.final_theta)}};
}

SensorCurve curve_from_json(const json& j) {
  SensorCurve c;
  c.sensor = j.at("sensor").get<int>();
  c.t = j.at("t").get<std::vector<double>>();
  c.mse = j.at("mse").get<std::vector<double>>();
  c.theta_err_norm = j.at("theta_err_norm").get<std::vector<double>>();
  c.final_theta = vector_from_json(j.at("final_theta"));
  return c;
}

}  // namespace

void export_json(const RunReport& report, const std::string& path) {
  json root;
  root["schema_version"] = report.schema_version;
  root["scenario"] = report.scenario;
  root["sensors"] = report.sensors;
  root["T"] = report.T;
  root["h"] = report.h;
  root["delta"] = report.delta;
  root["replications"] = report.replications;
  root["seed"] = report.seed;
  root["assumption1_connected"] = report.assumption1_connected;
  root["theta_true"] = to_json(report.theta_true);
  root["partial"] = report.partial;
  root["abort_events"] = report.abort_events;
  root["step_count"] = report.step_count;
  if (report.include_timing) root["wall_clock_seconds"] = report.wall_clock_seconds;

  json estimators = json::array();
  for (const auto& est : report.estimators) {
    json e;
    e["name"] = est.name;
    e["audit"] = {{"max_lyapunov_violation", est.max_lyapunov_violation},
                  {"max_det_violation", est.max_det_violation},
                  {"max_conservation_residual", est.max_conservation_residual},
                  {"max_consistency_residual", est.max_consistency_residual},
                  {"max_info_increment_residual", est.max_info_increment_residual}};
    json rows = json::array();
    for (const auto& row : est.audit_rows) {
      rows.push_back({{"replication", row.replication},
                      {"max_lyapunov_violation", row.max_lyapunov_violation},
                      {"max_det_violation", row.max_det_violation},
                      {"conservation_residual", row.conservation_residual}});
    }
    e["per_replication_audits"] = rows;
    json curves = json::array();
    for (const auto& c : est.mean_curves) curves.push_back(to_json(c));
    e["sensors"] = curves;
    estimators.push_back(e);
  }
  root["estimators"] = estimators;

  root["excitation"] = {{"t", report.excitation.t},
                        {"R", report.excitation.R},
                        {"lambda_min", report.excitation.lambda_min},
                        {"log_ratio", report.excitation.log_ratio},
                        {"R_at_tn", report.excitation.r_at_tn},
                        {"pe_window_pass", report.excitation.pe_window_pass},
                        {"trend", report.excitation.trend},
                        {"satisfied_hint", report.excitation.satisfied_hint},
                        {"sensor_log_ratio", report.excitation.sensor_ratio}};

  std::filesystem::path out(path);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  std::ofstream file(path);
  if (!file) throw ConfigError("cannot write report to '" + path + "'");
  file << root.dump(2) << "\n";
}

RunReport load_report_json(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw ConfigError("cannot open report '" + path + "'");
  json root;
  try {
    file >> root;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("report is not valid JSON: ") + e.what());
  }

  RunReport report;
  report.schema_version = root.at("schema_version").get<int>();
  report.scenario = root.at("scenario").get<std::string>();
  report.sensors = root.at("sensors").get<int>();
  report.T = root.at("T").get<double>();
  report.h = root.at("h").get<double>();
  report.delta = root.at("delta").get<double>();
  report.replications = root.at("replications").get<int>();
  report.seed = root.at("seed").get<std::uint64_t>();
  report.assumption1_connected = root.at("assumption1_connected").get<bool>();
  report.theta_true = vector_from_json(root.at("theta_true"));
  report.partial = root.at("partial").get<bool>();
  report.abort_events = root.at("abort_events").get<std::vector<std::string>>();
  report.step_count = root.at("step_count").get<long long>();
  if (root.contains("wall_clock_seconds")) {
    report.include_timing = true;
    report.wall_clock_seconds = root["wall_clock_seconds"].get<double>();
  }

  for (const auto& e : root.at("estimators")) {
    EstimatorReport est;
    est.name = e.at("name").get<std::string>();
    const auto& audit = e.at("audit");
    est.max_lyapunov_violation = audit.at("max_lyapunov_violation").get<double>();
    est.max_det_violation = audit.at("max_det_violation").get<double>();
    est.max_conservation_residual = audit.at("max_conservation_residual").get<double>();
    est.max_consistency_residual = audit.at("max_consistency_residual").get<double>();
    est.max_info_increment_residual = audit.at("max_info_increment_residual").get<double>();
    for (const auto& row : e.at("per_replication_audits")) {
      est.audit_rows.push_back({row.at("replication").get<int>(),
                                row.at("max_lyapunov_violation").get<double>(),
                                row.at("max_det_violation").get<double>(),
                                row.at("conservation_residual").get<double>()});
    }
    for (const auto& c : e.at("sensors")) est.mean_curves.push_back(curve_from_json(c));
    report.estimators.push_back(std::move(est));
  }

  const auto& exc = root.at("excitation");
  report.excitation.t = exc.at("t").get<std::vector<double>>();
  report.excitation.R = exc.at("R").get<std::vector<double>>();
  report.excitation.lambda_min = exc.at("lambda_min").get<std::vector<double>>();
  report.excitation.log_ratio = exc.at("log_ratio").get<std::vector<double>>();
  report.excitation.r_at_tn = exc.at("R_at_tn").get<std::vector<double>>();
  report.excitation.pe_window_pass = exc.at("pe_window_pass").get<std::vector<int>>();
  report.excitation.trend = exc.at("trend").get<double>();
  report.excitation.satisfied_hint = exc.at("satisfied_hint").get<bool>();
  report.excitation.sensor_ratio =
      exc.at("sensor_log_ratio").get<std::vector<std::vector<double>>>();
  return report;
}

void export_csv(const RunReport& report, const std::string& out_dir,
                bool per_replication_rows) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);

  {
    std::ofstream mse(dir / "mse.csv");
    if (!mse) throw ConfigError("cannot write to '" + (dir / "mse.csv").string() + "'");
    mse << "estimator,replication_or_mean,sensor,t,mse,theta_err_norm\n";
    for (const auto& est : report.estimators) {
      for (const auto& c : est.mean_curves) {
        for (std::size_t k = 0; k < c.t.size(); ++k) {
          mse << est.name << ",mean," << c.sensor << ',' << fmt(c.t[k]) << ','
              << fmt(c.mse[k]) << ',' << fmt(c.theta_err_norm[k]) << '\n';
        }
      }
      if (per_replication_rows) {
        for (std::size_t rep = 0; rep < est.per_replication.size(); ++rep) {
          for (const auto& c : est.per_replication[rep]) {
            for (std::size_t k = 0; k < c.t.size(); ++k) {
              mse << est.name << ',' << rep << ',' << c.sensor << ',' << fmt(c.t[k])
                  << ',' << fmt(c.mse[k]) << ',' << fmt(c.theta_err_norm[k]) << '\n';
            }
          }
        }
      }
    }
  }

  {
    std::ofstream exc(dir / "excitation.csv");
    exc << "epoch,t,R,lambda_min,log_ratio,pe_window_pass\n";
    for (std::size_t n = 0; n < report.excitation.t.size(); ++n) {
      exc << n << ',' << fmt(report.excitation.t[n]) << ',' << fmt(report.excitation.R[n])
          << ',' << fmt(report.excitation.lambda_min[n]) << ','
          << fmt(report.excitation.log_ratio[n]) << ','
          << report.excitation.pe_window_pass[n] << '\n';
    }
  }

  {
    std::ofstream audit(dir / "audit.csv");
    audit << "replication,max_lyapunov_violation,max_det_violation,conservation_residual\n";
    // One row per replication, the worst value across the fusion estimators.
    std::size_t rows = 0;
    for (const auto& est : report.estimators) rows = std::max(rows, est.audit_rows.size());
    for (std::size_t r = 0; r < rows; ++r) {
      AuditRow merged;
      merged.replication = -1;
      for (const auto& est : report.estimators) {
        if (r >= est.audit_rows.size()) continue;
        const auto& row = est.audit_rows[r];
        merged.replication = row.replication;
        merged.max_lyapunov_violation =
            std::max(merged.max_lyapunov_violation, row.max_lyapunov_violation);
        merged.max_det_violation = std::max(merged.max_det_violation, row.max_det_violation);
        merged.conservation_residual =
            std::max(merged.conservation_residual, row.conservation_residual);
      }
      if (merged.replication < 0) continue;
      audit << merged.replication << ',' << fmt(merged.max_lyapunov_violation) << ','
            << fmt(merged.max_det_violation) << ',' << fmt(merged.conservation_residual)
            << '\n';
    }
  }
}

bool reports_equal(const RunReport& a, const RunReport& b) {
  auto curves_equal = [](const std::vector<SensorCurve>& x, const std::vector<SensorCurve>& y) {
    return x == y;
  };
  if (a.schema_version != b.schema_version || a.scenario != b.scenario ||
      a.sensors != b.sensors || a.T != b.T || a.h != b.h || a.delta != b.delta ||
      a.replications != b.replications || a.seed != b.seed ||
      a.assumption1_connected != b.assumption1_connected || a.partial != b.partial ||
      a.abort_events != b.abort_events || a.step_count != b.step_count) {
    return false;
  }
  if (!bitwise_equal(a.theta_true, b.theta_true)) return false;
  if (a.estimators.size() != b.estimators.size()) return false;
  for (std::size_t e = 0; e < a.estimators.size(); ++e) {
    const auto& x = a.estimators[e];
    const auto& y = b.estimators[e];
    if (x.name != y.name || x.audit_rows != y.audit_rows ||
        x.max_lyapunov_violation != y.max_lyapunov_violation ||
        x.max_det_violation != y.max_det_violation ||
        x.max_conservation_residual != y.max_conservation_residual ||
        x.max_consistency_residual != y.max_consistency_residual ||
        x.max_info_increment_residual != y.max_info_increment_residual ||
        !curves_equal(x.mean_curves, y.mean_curves)) {
      return false;
    }
  }
  return a.excitation == b.excitation;
}

}  // namespace dlsim
