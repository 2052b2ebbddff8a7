#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dlsim/signal.hpp"

namespace dlsim {

/// Input generator: sum of sinusoids a*sin(f*t + p) plus a polynomial drift
/// c0 + c1*t + c2*t^2 + ...
struct SinTerm {
  double amplitude = 0.0;
  double frequency = 0.0;
  double phase = 0.0;
  bool operator==(const SinTerm&) const = default;
};

struct Waveform {
  std::vector<SinTerm> sins;
  std::vector<double> poly;

  double eval(double t) const;
  bool operator==(const Waveform&) const = default;
};

enum class NoiseMode { Off, Wiener, Regressor };

/// Model: regressors come out of the y/u/v dynamics. Exogenous: the scenario
/// supplies the regressor paths directly (the 12-sensor synthetic case).
enum class RegressorSource { Model, Exogenous };

enum class PlantKind { General, RlcStateSpace, Synthetic12 };

/// Sizes and provenance of the regressor vector
/// [y .. S^{p-1}y, u .. S^{q-1}u, vhat .. S^{r-1}vhat].
struct RegressorLayout {
  int p = 0;
  int q = 0;
  int r = 0;
  RegressorSource source = RegressorSource::Model;
  int dim = 0;
  bool operator==(const RegressorLayout&) const = default;
};

struct PlantScenario {
  PlantKind kind = PlantKind::General;
  int sensors = 0;
  PolynomialInS a = PolynomialInS::one();          // monic, degree p
  PolynomialInS b = PolynomialInS::direct({1.0});  // direct, q taps
  PolynomialInS c = PolynomialInS::one();          // monic, degree r
  PolynomialInS d = PolynomialInS::one();          // monic noise filter
  Eigen::VectorXd theta;                           // [-a_1..-a_p, b_1..b_q, c_1..c_r]
  std::vector<Waveform> inputs;                    // one per sensor (Model/Rlc)
  NoiseMode noise = NoiseMode::Off;
  RegressorSource regressor_source = RegressorSource::Model;
  double rlc_R = 0.0, rlc_L = 0.0, rlc_C = 0.0;    // RlcStateSpace only

  RegressorLayout layout() const;
  int dim() const { return static_cast<int>(theta.size()); }
};

/// Ground-truth sample paths for one replication: outputs, inputs, noise and
/// the true regressor phi0 per Eq.-style layout. Immutable after simulation.
struct Trajectories {
  double h = 0.0;
  int samples = 0;                        // M+1 grid points including t=0
  Eigen::VectorXd theta_true;
  RegressorLayout layout;
  std::vector<std::vector<double>> y;     // [sensor][m]
  std::vector<std::vector<double>> u;
  std::vector<std::vector<double>> v;
  std::vector<Eigen::MatrixXd> phi0;      // [sensor], dim x samples

  double t(int m) const { return h * m; }
};

/// Simulates all sensors over M = round(T/h) steps. The general form is
/// assembled sample-by-sample from the tape integrals (explicit because the
/// newest increment uses the left-endpoint rule); the RLC scenario integrates
/// the (eps, y) state with explicit Euler; the synthetic case injects the
/// regressors directly. Throws NumericalAbort with the offending time stamp
/// if the state leaves the finite range.
Trajectories simulate_network(const PlantScenario& scenario, const NoiseStream& noise,
                              double horizon);

/// theta = [-a_1..-a_p, b_1..b_q, c_1..c_r].
Eigen::VectorXd assemble_theta(const PolynomialInS& a, const PolynomialInS& b,
                               const PolynomialInS& c);

/// RLC circuit scenario: L*eps'' + R*eps' + eps/C = u, y = eps',
/// theta = (-R/L, -1/(LC), 1/L), phi0 = (y, Sy, u). Inputs default to the
/// six sinusoid drives of the reference experiment. Requires L > 0, C > 0,
/// R >= 0 (R = 0 is the undamped circuit).
PlantScenario rlc_scenario(double R, double L, double C,
                           std::vector<Waveform> inputs = {});
std::vector<Waveform> rlc_default_inputs();

/// 12-sensor synthetic scenario: theta = (1,...,10), sensor i excites only
/// coordinate tau(i) = i mod 10 (tau = 0 mapped to coordinate 10) with
/// x_i(t) = drift + Wiener, drift in {0.3t, t, t^2} by i mod 3; observations
/// carry independent Wiener noise with c(S) = d(S) = 1.
PlantScenario synthetic12_scenario();

/// Deterministic drift of sensor i (1-based) at time t in the synthetic case.
double synthetic12_drift(int sensor, double t);
/// Excited coordinate of sensor i, 1-based (i mod 10, with 0 -> 10).
int synthetic12_coordinate(int sensor);

/// Explicit-Euler integration of the raw RLC state from a given initial
/// condition; used by simulate_network with zero state and directly by the
/// passivity checks. Returns eps and y sample paths of length steps+1.
void integrate_rlc(double R, double L, double C, const Waveform& input, double h,
                   int steps, double eps0, double y0,
                   const std::vector<double>* wiener_increments,
                   std::vector<double>& eps_out, std::vector<double>& y_out);

}  // namespace dlsim
