#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "dlsim/estimator.hpp"

namespace dlsim {

/// Per-epoch excitation quantities. R(n) totals the regressor energy of the
/// windows 0..n plus lambda_max of the initial block information matrix;
/// lambda_min(n) is the smallest eigenvalue of the network-summed outer
/// products truncated at n - D_G plus the summed initial information. The
/// r_at_tn series is the continuous-time reading of R at t_n (windows up to
/// n-1 only); both variants are reported because the typeset sums differ.
struct ExcitationSeries {
  int epochs = 0;
  double delta = 0.0;
  int diameter = 1;
  double alpha = 3.0;
  std::vector<double> t;                             // t_{n+1} for epoch n
  std::vector<double> R;
  std::vector<double> lambda_min;
  std::vector<double> log_ratio;                     // log R(n) / lambda_min(n)
  std::vector<double> r_at_tn;
  // Single-agent quantities per sensor, with the same additive constants and
  // the same epoch cutoffs as the network series so that N = 1 degenerates
  // exactly and the network value dominates every sensor's.
  std::vector<std::vector<double>> sensor_R;         // [sensor][epoch]
  std::vector<std::vector<double>> sensor_lambda;
  std::vector<std::vector<double>> sensor_ratio;     // log R_i / lambda_i
};

ExcitationSeries excitation_series(const EstimateHistory& history);

/// R-series alone (Eq.-(12) reading).
std::vector<double> accumulate_R(const EstimateHistory& history);
/// lambda_min-series alone (Eq.-(13) reading).
std::vector<double> lambda_min_series(const EstimateHistory& history);

struct CecVerdict {
  double trend = 0.0;        // least-squares slope over the trailing window
  bool satisfied_hint = false;
  bool used_log = true;      // false when the ratio was not positive throughout
};

/// Finite-horizon heuristic for the cooperative excitation condition: the
/// slope of log(ratio) over the last `window` epochs plus a threshold on the
/// final ratio. Asymptotic conditions cannot be decided from finite data;
/// this is a trend report, not a proof.
CecVerdict cec_verdict(const ExcitationSeries& series, int window, double threshold);

/// Windowed persistent-excitation check: partitions the horizon into
/// consecutive windows of length T0 (a multiple of h) and tests
/// lambda_min(sum over sensors of the windowed phi phi^T integral) >= alpha.
/// Restricting to a single sensor checks the individual PE condition.
std::vector<bool> pe_window_check(const Trajectories& traj, double T0, double alpha,
                                  std::optional<int> sensor = std::nullopt);

/// Smallest windowed eigenvalue over the same partition; the PE margin.
std::vector<double> pe_window_eigenvalues(const Trajectories& traj, double T0,
                                          std::optional<int> sensor = std::nullopt);

}  // namespace dlsim
