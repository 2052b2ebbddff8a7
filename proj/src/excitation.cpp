#include "dlsim/excitation.hpp"

#include <cmath>

#include "dlsim/errors.hpp"

namespace dlsim {

namespace {

double lambda_min_sym(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace

ExcitationSeries excitation_series(const EstimateHistory& history) {
  const int epochs = history.epochs;
  const int sensors = history.sensors;
  const int dim = history.dim;
  if (static_cast<int>(history.epoch_records.size()) != epochs) {
    throw ConfigError("history carries no per-epoch records (gradient baseline?)");
  }

  ExcitationSeries s;
  s.epochs = epochs;
  s.delta = history.delta;
  s.diameter = history.diameter;
  s.alpha = history.alpha;
  s.t.resize(epochs);
  s.R.resize(epochs);
  s.lambda_min.resize(epochs);
  s.log_ratio.resize(epochs);
  s.r_at_tn.resize(epochs);
  s.sensor_R.assign(sensors, std::vector<double>(epochs));
  s.sensor_lambda.assign(sensors, std::vector<double>(epochs));
  s.sensor_ratio.assign(sensors, std::vector<double>(epochs));

  const double info0 = 1.0 / history.alpha;  // lambda_max(P0^{-1}) with P0 = alpha I
  double network_energy = 0.0;
  std::vector<double> sensor_energy(sensors, 0.0);

  Eigen::MatrixXd network_sum = Eigen::MatrixXd::Identity(dim, dim) * (sensors * info0);
  std::vector<Eigen::MatrixXd> sensor_sum(
      sensors, Eigen::MatrixXd::Identity(dim, dim) * info0);

  for (int n = 0; n < epochs; ++n) {
    s.t[n] = history.delta * (n + 1);
    s.r_at_tn[n] = network_energy + info0;
    for (int i = 0; i < sensors; ++i) {
      const auto& rec = history.epoch_records[n][i];
      network_energy += rec.energy;
      sensor_energy[i] += rec.energy;
    }
    s.R[n] = network_energy + info0;

    // The truncated sums lag the energy by D_G windows.
    const int lag = n - history.diameter;
    if (lag >= 0) {
      for (int i = 0; i < sensors; ++i) {
        network_sum += history.epoch_records[lag][i].phi_outer;
        sensor_sum[i] += history.epoch_records[lag][i].phi_outer;
      }
    }
    s.lambda_min[n] = lambda_min_sym(network_sum);
    s.log_ratio[n] = std::log(s.R[n]) / s.lambda_min[n];
    for (int i = 0; i < sensors; ++i) {
      s.sensor_R[i][n] = sensor_energy[i] + info0;
      s.sensor_lambda[i][n] = lambda_min_sym(sensor_sum[i]);
      s.sensor_ratio[i][n] = std::log(s.sensor_R[i][n]) / s.sensor_lambda[i][n];
    }
  }
  return s;
}

std::vector<double> accumulate_R(const EstimateHistory& history) {
  return excitation_series(history).R;
}

std::vector<double> lambda_min_series(const EstimateHistory& history) {
  return excitation_series(history).lambda_min;
}

CecVerdict cec_verdict(const ExcitationSeries& series, int window, double threshold) {
  if (window < 2 || series.epochs < 2 * window) {
    throw ConfigError("cec_verdict needs at least 2*window epochs");
  }
  CecVerdict verdict;
  const int start = series.epochs - window;
  bool all_positive = true;
  for (int n = start; n < series.epochs; ++n) {
    if (!(series.log_ratio[n] > 0.0)) all_positive = false;
  }
  verdict.used_log = all_positive;

  // Least-squares slope of f(n) over the trailing window, f = log(ratio) when
  // the ratio is positive throughout and the raw ratio otherwise.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (int n = start; n < series.epochs; ++n) {
    const double x = n;
    const double y = all_positive ? std::log(series.log_ratio[n]) : series.log_ratio[n];
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double count = window;
  verdict.trend = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  verdict.satisfied_hint =
      verdict.trend < 0.0 && series.log_ratio[series.epochs - 1] < threshold;
  return verdict;
}

std::vector<double> pe_window_eigenvalues(const Trajectories& traj, double T0,
                                          std::optional<int> sensor) {
  const double h = traj.h;
  const double ratio = T0 / h;
  const int window_steps = static_cast<int>(std::llround(ratio));
  if (window_steps < 1 || std::abs(ratio - window_steps) > 1e-9 * std::max(1.0, ratio)) {
    throw ConfigError("PE window T0 must be a positive multiple of h");
  }
  const int sensors = static_cast<int>(traj.y.size());
  const int steps = traj.samples - 1;
  const int windows = steps / window_steps;

  std::vector<RegressorStream> streams;
  for (int i = 0; i < sensors; ++i) streams.emplace_back(traj, i);

  std::vector<double> eigenvalues;
  eigenvalues.reserve(windows);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(traj.layout.dim, traj.layout.dim);
  int filled = 0;
  for (int m = 0; m < windows * window_steps; ++m) {
    for (int i = 0; i < sensors; ++i) {
      const Eigen::VectorXd phi = streams[i].next();
      if (sensor && *sensor != i) continue;
      acc.noalias() += (phi * phi.transpose()) * h;
    }
    if (++filled == window_steps) {
      eigenvalues.push_back(lambda_min_sym(acc));
      acc.setZero();
      filled = 0;
    }
  }
  return eigenvalues;
}

std::vector<bool> pe_window_check(const Trajectories& traj, double T0, double alpha,
                                  std::optional<int> sensor) {
  const auto eigs = pe_window_eigenvalues(traj, T0, sensor);
  std::vector<bool> pass(eigs.size());
  for (std::size_t i = 0; i < eigs.size(); ++i) pass[i] = eigs[i] >= alpha;
  return pass;
}

}  // namespace dlsim
