#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dlsim/network.hpp"
#include "dlsim/plant.hpp"
#include "dlsim/signal.hpp"

namespace dlsim {

// Information matrices are carried in 80-bit extended precision. The fusion
// audits compare sums of these matrices at absolute tolerance 1e-9 while the
// entries grow past 1e7 on long runs; double storage would make the audit
// measure its own rounding instead of the algorithm.
using MatrixL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using VectorL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

/// Diffusion instants t_k = k * delta up to the horizon.
struct FusionSchedule {
  double delta = 0.0;
  double horizon = 0.0;

  int epochs() const;                      // K with horizon = K * delta
  int steps_per_window(double h) const;    // s with delta = s * h
};

struct RunOptions {
  Eigen::VectorXd theta0;                             // empty -> zeros
  std::vector<Eigen::VectorXd> theta0_per_sensor;     // optional override
  double alpha = 3.0;                                 // P(0) = alpha * I
  int stride = 100;                                   // trace every `stride` steps
  bool euler_covariance = false;  // Euler on dP (discretization studies only;
                                  // the rank-one form is the production path)
  bool freeze_theta = false;      // keep theta at theta0 (residual identity tests)
  bool record_step_lyapunov = false;
};

/// phi = [y .. S^{p-1}y, u .. S^{q-1}u, vhat .. S^{r-1}vhat] read from the
/// tapes at their newest sample. tape_vhat may be null when r = 0.
Eigen::VectorXd build_regressor(const RegressorLayout& layout, const SignalTape& tape_y,
                                const SignalTape& tape_u, const SignalTape* tape_vhat);

/// Exact rank-one covariance update, the inverse of info += phi phi^T h:
/// P - (P phi)(P phi)^T h / (1 + phi^T P phi h). Preserves positive
/// definiteness for any phi and h > 0.
void mil_update(Eigen::MatrixXd& P, const Eigen::VectorXd& phi, double h);

/// Per-sensor adaptation state between fusion instants: estimate, covariance,
/// extended-precision information matrix, innovation tape (for applying d(S))
/// and the residual tape vhat with its repeated integrals.
class SensorFilter {
 public:
  SensorFilter(const RegressorLayout& layout, const PolynomialInS& d_poly,
               const Eigen::VectorXd& theta0, double alpha, double h, int sensor);

  /// Seeds the tapes with the t = 0 samples. Must be called once before step().
  void start(double y0, double u0);

  /// Advances t_m -> t_{m+1}: innovation from dy, d(S)-filtered increment,
  /// information/covariance rank-one updates, estimate update with the fresh
  /// covariance, then the residual vhat(t_{m+1}). phi_exogenous must point at
  /// phi(t_m) for exogenous layouts and be null otherwise.
  void step(double y_next, double u_next, const double* phi_exogenous);

  /// Regressor at the current sample (the next step's left endpoint).
  Eigen::VectorXd regressor(const double* phi_exogenous) const;

  const Eigen::VectorXd& theta() const { return theta_; }
  const Eigen::MatrixXd& covariance() const { return P_; }
  const MatrixL& info() const { return info_; }
  int sample_index() const { return tape_y_.size() - 1; }
  double vhat(int m) const { return tape_vhat_->value(0, m); }

  // Window accumulators for the excitation quadratures; the driver collects
  // and resets them at each fusion instant.
  const MatrixL& window_outer() const { return window_outer_; }
  long double window_energy() const { return window_energy_; }
  const MatrixL& window_start_info() const { return window_start_info_; }
  void reset_window();

  // Fusion commits a synchronously computed state.
  void commit_fusion(MatrixL info, Eigen::MatrixXd P, Eigen::VectorXd theta);

  bool euler_covariance = false;
  bool freeze_theta = false;

 private:
  RegressorLayout layout_;
  PolynomialInS d_;
  int sensor_;
  double h_;
  Eigen::VectorXd theta_;
  Eigen::MatrixXd P_;
  MatrixL info_;
  SignalTape tape_y_, tape_u_, tape_z_, tape_psi_;
  std::unique_ptr<SignalTape> tape_vhat_;
  MatrixL window_outer_;
  long double window_energy_ = 0.0L;
  MatrixL window_start_info_;
};

/// One diffusion step, Algorithm-1 style: Pi'_i = sum_j a_ij Pi_j and
/// theta'_i = Pi'^{-1} sum_j a_ij Pi_j theta_j, committed synchronously.
/// Rows that are exactly the identity (a_ii = 1) leave the sensor bitwise
/// untouched, so the single-node and standard-LS paths degenerate exactly.
/// Near-singular solves fall back once to a ridge of 1e-10 tr(Pi)/dim.
/// Returns the number of ridge events.
int diffuse(std::vector<SensorFilter>& filters, const Eigen::MatrixXd& weights);

struct FusionAudit {
  int epoch = 0;       // fusion instant index k, t = k * delta
  double t = 0.0;
  double lyapunov_before = 0.0;   // sum_i theta~^T Pi theta~ just before fusion
  double lyapunov_after = 0.0;
  double logdet_before = 0.0;     // log det of blockdiag(Pi)
  double logdet_after = 0.0;
  double conservation_residual = 0.0;   // ||sum Pi' - sum Pi||_F
  double consistency_residual = 0.0;    // max_i ||Pi_i P_i - I||_F before fusion
  double info_increment_residual = 0.0; // max_i ||dPi_i(window) - G_i||_F
  double lambda_min_info = 0.0;         // min_i lambda_min(Pi_i) after fusion
  int ridge_events = 0;
};

struct EpochRecord {
  Eigen::MatrixXd phi_outer;  // G_{k,j} = sum_m phi phi^T h over the window
  double energy = 0.0;        // sum_m ||phi||^2 h
};

struct SensorTrace {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> theta;
};

struct EstimateHistory {
  std::string estimator;
  int sensors = 0;
  int dim = 0;
  double h = 0.0, delta = 0.0, horizon = 0.0;
  int epochs = 0;
  int diameter = 1;
  double alpha = 3.0;
  Eigen::VectorXd theta_true;
  std::vector<SensorTrace> traces;                     // strided, t=0 included
  std::vector<FusionAudit> audits;                     // empty for the gradient baseline
  std::vector<std::vector<EpochRecord>> epoch_records; // [epoch][sensor]
  std::vector<Eigen::VectorXd> final_theta;
  std::vector<Eigen::MatrixXd> final_P;
  std::vector<double> vtilde_rms;                      // v - vhat RMS, r > 0 only
  std::vector<double> step_lyapunov;                   // optional per-step V
  long long step_count = 0;
};

/// Algorithm 1 on a pre-simulated replication; the spec-level wrappers below
/// simulate and delegate here so several estimators can share one data set.
EstimateHistory run_dls_on(const Trajectories& traj, const PolynomialInS& d_poly,
                           const Eigen::MatrixXd& weights, const FusionSchedule& schedule,
                           const RunOptions& opts, int diameter = 1);

EstimateHistory run_dls(const PlantScenario& scenario, const NetworkTopology& topology,
                        const Eigen::MatrixXd& weights, const FusionSchedule& schedule,
                        const NoiseStream& noise, const RunOptions& opts);

/// Non-cooperative baseline: run_dls with the identity weight matrix.
EstimateHistory run_standard_ls(const PlantScenario& scenario, const FusionSchedule& schedule,
                                const NoiseStream& noise, const RunOptions& opts);
EstimateHistory run_standard_ls_on(const Trajectories& traj, const PolynomialInS& d_poly,
                                   const FusionSchedule& schedule, const RunOptions& opts);

struct GradientGains {
  double gamma = 1.0;
  double beta = 1.0;
};

/// Consensus + gradient baseline
///   dtheta_i = gamma phi_i (dy_i - phi_i^T theta_i dt) + beta sum_j a_ij (theta_j - theta_i) dt
/// Euler-discretized; regressors limited to r = 0 or exogenous layouts.
EstimateHistory run_coop_gradient_on(const Trajectories& traj, const Eigen::MatrixXd& weights,
                                     const GradientGains& gains, const FusionSchedule& schedule,
                                     const RunOptions& opts);
EstimateHistory run_coop_gradient(const PlantScenario& scenario, const NetworkTopology& topology,
                                  const Eigen::MatrixXd& weights, const GradientGains& gains,
                                  const FusionSchedule& schedule, const NoiseStream& noise,
                                  const RunOptions& opts);

/// Streams the measured-data regressors phi(t_m), m = 0..samples-2, rebuilding
/// the tape integrals the estimator would see. Shared by the gradient
/// baseline, the prediction-error oracle and the PE diagnostics. Requires
/// r = 0 unless the layout is exogenous (vhat is estimator state).
class RegressorStream {
 public:
  RegressorStream(const Trajectories& traj, int sensor);
  Eigen::VectorXd next();
  bool done() const { return m_ >= traj_.samples - 1; }
  int index() const { return m_; }

 private:
  const Trajectories& traj_;
  int sensor_;
  int m_ = 0;
  std::unique_ptr<SignalTape> tape_y_, tape_u_;
};

}  // namespace dlsim
