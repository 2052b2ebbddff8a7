#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dlsim/estimator.hpp"
#include "dlsim/excitation.hpp"
#include "dlsim/network.hpp"
#include "dlsim/plant.hpp"

namespace dlsim {

enum class EstimatorKind { Dls, StandardLs, CoopGradient };

std::string estimator_name(EstimatorKind kind);

struct DiagnosticToggles {
  bool per_replication_csv = false;
  bool include_timing = false;   // timing breaks byte-level determinism; opt-in
  bool full_resolution = false;
  bool oracle_compare = false;
  double pe_T0 = 4.0;
  double pe_alpha = 0.1;
  int cec_window = 0;            // 0 -> half of the epochs
  double cec_threshold = 0.1;
  bool operator==(const DiagnosticToggles&) const = default;
};

struct ScenarioConfig {
  std::string scenario;                       // rlc | synthetic12 | custom
  int nodes = 0;
  std::vector<std::pair<int, int>> edges;
  std::string weight_rule = "metropolis";     // metropolis | explicit
  std::optional<Eigen::MatrixXd> explicit_weights;
  double T = 0.0, h = 0.0, delta = 0.0;
  int replications = 1;
  std::uint64_t seed = 0;
  std::vector<EstimatorKind> estimators{EstimatorKind::Dls};
  GradientGains gains;
  Eigen::VectorXd theta0;                     // empty -> zeros
  double alpha = 3.0;
  NoiseMode noise = NoiseMode::Off;
  double rlc_R = 3.0, rlc_L = 5.0, rlc_C = 5.0;
  std::vector<Waveform> inputs;               // custom (required) or rlc override
  // custom model polynomials; b is mandatory for custom scenarios
  std::vector<double> poly_a, poly_b{1.0}, poly_c, poly_d;
  std::string out_dir = "out";
  double stride_seconds = 0.1;
  DiagnosticToggles diagnostics;

  PlantScenario make_scenario() const;
  NetworkTopology make_topology() const;
  Eigen::MatrixXd make_weights(const NetworkTopology& topology) const;
  FusionSchedule make_schedule() const { return FusionSchedule{delta, T}; }
  int stride_steps() const;
};

/// Strict loader: every key must be known, every value well-formed, and the
/// grid ratios integral. Throws ConfigError otherwise.
ScenarioConfig load_config_file(const std::string& path);
ScenarioConfig load_config_json(const std::string& json_text);

/// Default topologies shipped with the named scenarios (documented in the
/// README): a 6-ring for the RLC case, a 12-ring with two cross chords for
/// the synthetic case.
std::vector<std::pair<int, int>> default_ring_edges(int nodes);
std::vector<std::pair<int, int>> synthetic12_default_edges();

struct SensorCurve {
  int sensor = 0;                    // 1-based
  std::vector<double> t;
  std::vector<double> mse;           // squared error; mean over reps in the mean curve
  std::vector<double> theta_err_norm;
  Eigen::VectorXd final_theta;
  bool operator==(const SensorCurve& other) const;
};

struct AuditRow {
  int replication = 0;
  double max_lyapunov_violation = 0.0;
  double max_det_violation = 0.0;
  double conservation_residual = 0.0;
  bool operator==(const AuditRow&) const = default;
};

struct EstimatorReport {
  std::string name;
  std::vector<SensorCurve> mean_curves;
  std::vector<std::vector<SensorCurve>> per_replication;   // kept in memory
  std::vector<AuditRow> audit_rows;                        // fusion estimators only
  double max_lyapunov_violation = 0.0;
  double max_det_violation = 0.0;
  double max_conservation_residual = 0.0;
  double max_consistency_residual = 0.0;
  double max_info_increment_residual = 0.0;
};

struct ExcitationReport {
  std::vector<double> t, R, lambda_min, log_ratio, r_at_tn;
  std::vector<int> pe_window_pass;     // aligned with epochs; see README
  double trend = 0.0;
  bool satisfied_hint = false;
  std::vector<std::vector<double>> sensor_ratio;
  bool operator==(const ExcitationReport&) const = default;
};

struct RunReport {
  int schema_version = 1;
  std::string scenario;
  int sensors = 0;
  double T = 0.0, h = 0.0, delta = 0.0;
  int replications = 0;
  std::uint64_t seed = 0;
  bool assumption1_connected = true;
  Eigen::VectorXd theta_true;
  std::vector<EstimatorReport> estimators;
  ExcitationReport excitation;
  long long step_count = 0;
  double wall_clock_seconds = 0.0;    // exported only with include_timing
  bool partial = false;
  std::vector<std::string> abort_events;
  bool include_timing = false;
};

/// Runs the configured replications with disjoint noise substreams, shares
/// each replication's trajectories across the selected estimators, reduces
/// MSE curves and invariant audits, and attaches the excitation series of the
/// first replication. Aborted replications are recorded and skipped.
RunReport run_monte_carlo(const ScenarioConfig& config);

/// Audit tolerances used by the `audit` verdict (exit code 4).
struct AuditTolerances {
  double lyapunov = 1e-9;
  double determinant = 1e-9;
  double conservation = 1e-9;
};
bool audits_pass(const RunReport& report, const AuditTolerances& tol = {});

/// Per-sensor minimizer of the accumulative prediction error at epoch n,
/// time t in [t_n, t_{n+1}]: full windows k < n are weighted a_ij^(n-k+1),
/// the running window enters unweighted, and the normal equations carry the
/// initial information (1/alpha) I as a prior unless include_prior is false.
/// Valid for d(S) = 1 layouts with r = 0 or exogenous regressors.
std::vector<Eigen::VectorXd> normal_equation_oracle(const Trajectories& traj,
                                                    const Eigen::MatrixXd& weights,
                                                    const FusionSchedule& schedule,
                                                    int epoch_n, double t, double alpha,
                                                    bool include_prior = true);

/// Writers. CSV files: mse.csv, excitation.csv, audit.csv under out_dir;
/// JSON: report.json. Deterministic field order and number formatting.
void export_csv(const RunReport& report, const std::string& out_dir,
                bool per_replication_rows);
void export_json(const RunReport& report, const std::string& path);
RunReport load_report_json(const std::string& path);

bool reports_equal(const RunReport& a, const RunReport& b);

}  // namespace dlsim
