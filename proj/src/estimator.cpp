#include "dlsim/estimator.hpp"

#include <cmath>
#include <string>

#include "dlsim/errors.hpp"

namespace dlsim {

namespace {

long long checked_ratio(double whole, double part, const char* what) {
  const double ratio = whole / part;
  const long long n = std::llround(ratio);
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * std::max(1.0, ratio)) {
    throw ConfigError(std::string(what) + " must divide evenly (got ratio " +
                      std::to_string(ratio) + ")");
  }
  return n;
}

MatrixL to_ld(const Eigen::MatrixXd& m) { return m.cast<long double>(); }

Eigen::MatrixXd to_double(const MatrixL& m) { return m.cast<double>(); }

long double logdet_spd(const MatrixL& m) {
  Eigen::LDLT<MatrixL> ldlt(m);
  long double acc = 0.0L;
  for (int i = 0; i < m.rows(); ++i) acc += std::log(ldlt.vectorD()(i));
  return acc;
}

long double lambda_min_spd(const MatrixL& m) {
  Eigen::SelfAdjointEigenSolver<MatrixL> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace

int FusionSchedule::epochs() const {
  if (!(delta > 0.0) || !(horizon > 0.0)) {
    throw ConfigError("fusion schedule needs positive delta and horizon");
  }
  return static_cast<int>(checked_ratio(horizon, delta, "fusion interval / horizon"));
}

int FusionSchedule::steps_per_window(double h) const {
  return static_cast<int>(checked_ratio(delta, h, "step / fusion interval"));
}

Eigen::VectorXd build_regressor(const RegressorLayout& layout, const SignalTape& tape_y,
                                const SignalTape& tape_u, const SignalTape* tape_vhat) {
  Eigen::VectorXd phi(layout.dim);
  const int m = tape_y.size() - 1;
  for (int l = 0; l < layout.p; ++l) phi(l) = tape_y.value(l, m);
  for (int l = 0; l < layout.q; ++l) phi(layout.p + l) = tape_u.value(l, m);
  for (int l = 0; l < layout.r; ++l) phi(layout.p + layout.q + l) = tape_vhat->value(l, m);
  return phi;
}

void mil_update(Eigen::MatrixXd& P, const Eigen::VectorXd& phi, double h) {
  const Eigen::VectorXd g = P * phi;
  const double denom = 1.0 + h * phi.dot(g);
  P.noalias() -= (g * g.transpose()) * (h / denom);
}

SensorFilter::SensorFilter(const RegressorLayout& layout, const PolynomialInS& d_poly,
                           const Eigen::VectorXd& theta0, double alpha, double h,
                           int sensor)
    : layout_(layout),
      d_(d_poly),
      sensor_(sensor),
      h_(h),
      theta_(theta0),
      tape_y_(h, std::max(layout.p - 1, 0)),
      tape_u_(h, std::max(layout.q - 1, 0)),
      tape_z_(h, std::max(d_poly.degree() - 1, 0)),
      tape_psi_(h, 1) {
  if (theta0.size() != layout.dim) {
    throw ConfigError("theta0 dimension mismatch with the regressor layout");
  }
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  P_ = Eigen::MatrixXd::Identity(layout.dim, layout.dim) * alpha;
  info_ = MatrixL::Identity(layout.dim, layout.dim) * (1.0L / static_cast<long double>(alpha));
  if (layout.r > 0) {
    tape_vhat_ = std::make_unique<SignalTape>(h, layout.r - 1);
  }
  window_outer_ = MatrixL::Zero(layout.dim, layout.dim);
  window_start_info_ = info_;
}

void SensorFilter::start(double y0, double u0) {
  tape_y_.append(y0);
  tape_u_.append(u0);
  tape_z_.append(0.0);
  if (tape_vhat_) tape_vhat_->append(y0);  // vhat(0) = y(0) - 0
}

Eigen::VectorXd SensorFilter::regressor(const double* phi_exogenous) const {
  if (layout_.source == RegressorSource::Exogenous) {
    return Eigen::Map<const Eigen::VectorXd>(phi_exogenous, layout_.dim);
  }
  return build_regressor(layout_, tape_y_, tape_u_, tape_vhat_.get());
}

void SensorFilter::step(double y_next, double u_next, const double* phi_exogenous) {
  const Eigen::VectorXd phi = regressor(phi_exogenous);
  const Eigen::VectorXd theta_at_m = theta_;

  // Instantaneous product for the Eq.-(8) residual integral S(phi^T theta).
  tape_psi_.append(phi.dot(theta_at_m));

  // Excitation quadratures share the estimator's left-endpoint convention.
  const VectorL phil = phi.cast<long double>();
  const long double hl = h_;
  window_outer_.noalias() += (phil * phil.transpose()) * hl;
  window_energy_ += phil.squaredNorm() * hl;

  // Innovation increment and its d(S)-filtered reading.
  const double dy = y_next - tape_y_.latest(0);
  const double e = dy - phi.dot(theta_at_m) * h_;
  tape_z_.append(tape_z_.latest(0) + e);
  double e_filtered = e;
  const int m_next = tape_z_.size() - 1;
  for (int l = 1; l <= d_.degree(); ++l) {
    e_filtered += d_.coeffs()[l - 1] * tape_z_.value(l - 1, m_next) * h_;
  }

  info_.noalias() += (phil * phil.transpose()) * hl;
  if (euler_covariance) {
    const Eigen::VectorXd g = P_ * phi;
    P_.noalias() -= (g * g.transpose()) * h_;
  } else {
    mil_update(P_, phi, h_);
  }
  if (!freeze_theta) {
    theta_.noalias() += (P_ * phi) * e_filtered;  // fresh covariance, RLS convention
  }

  tape_y_.append(y_next);
  tape_u_.append(u_next);
  if (tape_vhat_) {
    tape_vhat_->append(y_next - tape_psi_.upcoming_first());
  }

  if (!theta_.allFinite() || !P_.allFinite()) {
    throw NumericalAbort("estimator update diverged", h_ * tape_y_.size(), sensor_);
  }
}

void SensorFilter::reset_window() {
  window_outer_.setZero();
  window_energy_ = 0.0L;
  window_start_info_ = info_;
}

void SensorFilter::commit_fusion(MatrixL info, Eigen::MatrixXd P, Eigen::VectorXd theta) {
  info_ = std::move(info);
  P_ = std::move(P);
  theta_ = std::move(theta);
}

int diffuse(std::vector<SensorFilter>& filters, const Eigen::MatrixXd& weights) {
  const int n = static_cast<int>(filters.size());
  const int dim = static_cast<int>(filters[0].theta().size());
  int ridge_events = 0;

  std::vector<MatrixL> new_info(n);
  std::vector<Eigen::MatrixXd> new_P(n);
  std::vector<Eigen::VectorXd> new_theta(n);
  std::vector<bool> untouched(n, false);

  for (int i = 0; i < n; ++i) {
    if (weights(i, i) == 1.0) {  // identity row: bitwise no-op
      untouched[i] = true;
      continue;
    }
    MatrixL info_sum = MatrixL::Zero(dim, dim);
    VectorL rhs = VectorL::Zero(dim);
    for (int j = 0; j < n; ++j) {
      const long double a = weights(i, j);
      if (a == 0.0L) continue;
      info_sum.noalias() += a * filters[j].info();
      rhs.noalias() += a * (filters[j].info() * filters[j].theta().cast<long double>());
    }

    Eigen::LDLT<MatrixL> ldlt(info_sum);
    VectorL theta_ld = ldlt.solve(rhs);
    MatrixL P_ld = ldlt.solve(MatrixL::Identity(dim, dim));
    if (ldlt.info() != Eigen::Success || !theta_ld.allFinite() || !P_ld.allFinite()) {
      const long double ridge = 1e-10L * info_sum.trace() / dim;
      MatrixL regularized = info_sum + ridge * MatrixL::Identity(dim, dim);
      Eigen::LDLT<MatrixL> retry(regularized);
      theta_ld = retry.solve(rhs);
      P_ld = retry.solve(MatrixL::Identity(dim, dim));
      ++ridge_events;
      if (!theta_ld.allFinite() || !P_ld.allFinite()) {
        throw NumericalAbort("diffusion solve failed after regularization", 0.0, i + 1);
      }
    }
    new_info[i] = std::move(info_sum);
    Eigen::MatrixXd P = to_double(P_ld);
    new_P[i] = 0.5 * (P + P.transpose());
    new_theta[i] = theta_ld.cast<double>();
  }
  for (int i = 0; i < n; ++i) {
    if (untouched[i]) continue;
    filters[i].commit_fusion(std::move(new_info[i]), std::move(new_P[i]),
                             std::move(new_theta[i]));
  }
  return ridge_events;
}

namespace {

Eigen::VectorXd initial_theta(const RunOptions& opts, int dim, int sensor) {
  if (!opts.theta0_per_sensor.empty()) {
    return opts.theta0_per_sensor.at(static_cast<std::size_t>(sensor));
  }
  if (opts.theta0.size() == 0) return Eigen::VectorXd::Zero(dim);
  if (opts.theta0.size() != dim) {
    throw ConfigError("theta0 has dimension " + std::to_string(opts.theta0.size()) +
                      ", expected " + std::to_string(dim));
  }
  return opts.theta0;
}

struct AuditScratch {
  long double lyapunov = 0.0L;
  long double logdet = 0.0L;
  MatrixL info_sum;
};

AuditScratch audit_state(const std::vector<SensorFilter>& filters,
                         const Eigen::VectorXd& theta_true) {
  AuditScratch a;
  const int dim = static_cast<int>(theta_true.size());
  a.info_sum = MatrixL::Zero(dim, dim);
  const VectorL truth = theta_true.cast<long double>();
  for (const auto& f : filters) {
    const VectorL err = truth - f.theta().cast<long double>();
    a.lyapunov += err.dot(f.info() * err);
    a.logdet += logdet_spd(f.info());
    a.info_sum += f.info();
  }
  return a;
}

EstimateHistory run_information_filter(const Trajectories& traj,
                                       const PolynomialInS& d_poly,
                                       const Eigen::MatrixXd& weights,
                                       const FusionSchedule& schedule,
                                       const RunOptions& opts, int diameter,
                                       const char* name) {
  const int sensors = static_cast<int>(traj.y.size());
  const int dim = traj.layout.dim;
  if (weights.rows() != sensors || weights.cols() != sensors) {
    throw ConfigError("weight matrix size does not match the sensor count");
  }
  const int steps = traj.samples - 1;
  const int per_window = schedule.steps_per_window(traj.h);
  const int epochs = schedule.epochs();
  if (epochs * per_window != steps) {
    throw ConfigError("trajectory horizon does not match the fusion schedule");
  }

  EstimateHistory hist;
  hist.estimator = name;
  hist.sensors = sensors;
  hist.dim = dim;
  hist.h = traj.h;
  hist.delta = schedule.delta;
  hist.horizon = schedule.horizon;
  hist.epochs = epochs;
  hist.diameter = diameter;
  hist.alpha = opts.alpha;
  hist.theta_true = traj.theta_true;
  hist.traces.resize(sensors);
  hist.epoch_records.resize(epochs);

  std::vector<SensorFilter> filters;
  filters.reserve(sensors);
  for (int i = 0; i < sensors; ++i) {
    filters.emplace_back(traj.layout, d_poly, initial_theta(opts, dim, i), opts.alpha,
                         traj.h, i + 1);
    filters[i].euler_covariance = opts.euler_covariance;
    filters[i].freeze_theta = opts.freeze_theta;
    filters[i].start(traj.y[i][0], traj.u[i][0]);
  }

  const int stride = std::max(1, opts.stride);
  auto record = [&](int m) {
    for (int i = 0; i < sensors; ++i) {
      hist.traces[i].t.push_back(traj.t(m));
      hist.traces[i].theta.push_back(filters[i].theta());
    }
  };
  record(0);

  const bool exo = traj.layout.source == RegressorSource::Exogenous;
  for (int m = 0; m < steps; ++m) {
    for (int i = 0; i < sensors; ++i) {
      const double* phi_exo = exo ? traj.phi0[i].col(m).data() : nullptr;
      filters[i].step(traj.y[i][m + 1], traj.u[i][m + 1], phi_exo);
    }
    hist.step_count += sensors;
    if (opts.record_step_lyapunov) {
      long double v = 0.0L;
      const VectorL truth = traj.theta_true.cast<long double>();
      for (const auto& f : filters) {
        const VectorL err = truth - f.theta().cast<long double>();
        v += err.dot(f.info() * err);
      }
      hist.step_lyapunov.push_back(static_cast<double>(v));
    }

    const bool fusion_instant = ((m + 1) % per_window) == 0;
    if (fusion_instant) {
      const int epoch = (m + 1) / per_window;  // instant t_epoch
      auto& records = hist.epoch_records[epoch - 1];
      records.resize(sensors);
      FusionAudit audit;
      audit.epoch = epoch;
      audit.t = traj.t(m + 1);
      for (int i = 0; i < sensors; ++i) {
        records[i].phi_outer = to_double(filters[i].window_outer());
        records[i].energy = static_cast<double>(filters[i].window_energy());
        const MatrixL increment = filters[i].info() - filters[i].window_start_info();
        audit.info_increment_residual =
            std::max(audit.info_increment_residual,
                     static_cast<double>((increment - filters[i].window_outer()).norm()));
        const MatrixL consistency =
            filters[i].info() * to_ld(filters[i].covariance()) -
            MatrixL::Identity(dim, dim);
        audit.consistency_residual =
            std::max(audit.consistency_residual, static_cast<double>(consistency.norm()));
      }

      const AuditScratch before = audit_state(filters, traj.theta_true);
      audit.ridge_events = diffuse(filters, weights);
      const AuditScratch after = audit_state(filters, traj.theta_true);
      audit.lyapunov_before = static_cast<double>(before.lyapunov);
      audit.lyapunov_after = static_cast<double>(after.lyapunov);
      audit.logdet_before = static_cast<double>(before.logdet);
      audit.logdet_after = static_cast<double>(after.logdet);
      audit.conservation_residual =
          static_cast<double>((after.info_sum - before.info_sum).norm());
      long double lmin = std::numeric_limits<long double>::infinity();
      for (const auto& f : filters) lmin = std::min(lmin, lambda_min_spd(f.info()));
      audit.lambda_min_info = static_cast<double>(lmin);
      hist.audits.push_back(audit);
      for (auto& f : filters) f.reset_window();
    }
    if ((m + 1) % stride == 0 || m + 1 == steps) record(m + 1);
  }

  hist.final_theta.reserve(sensors);
  hist.final_P.reserve(sensors);
  for (const auto& f : filters) {
    hist.final_theta.push_back(f.theta());
    hist.final_P.push_back(f.covariance());
  }
  if (traj.layout.r > 0 && traj.layout.source == RegressorSource::Model) {
    hist.vtilde_rms.resize(sensors, 0.0);
    for (int i = 0; i < sensors; ++i) {
      long double acc = 0.0L;
      for (int m = 0; m < traj.samples; ++m) {
        const long double diff = traj.v[i][m] - filters[i].vhat(m);
        acc += diff * diff;
      }
      hist.vtilde_rms[i] = static_cast<double>(std::sqrt(acc / traj.samples));
    }
  }
  return hist;
}

}  // namespace

EstimateHistory run_dls_on(const Trajectories& traj, const PolynomialInS& d_poly,
                           const Eigen::MatrixXd& weights, const FusionSchedule& schedule,
                           const RunOptions& opts, int diameter) {
  return run_information_filter(traj, d_poly, weights, schedule, opts, diameter, "dls");
}

EstimateHistory run_dls(const PlantScenario& scenario, const NetworkTopology& topology,
                        const Eigen::MatrixXd& weights, const FusionSchedule& schedule,
                        const NoiseStream& noise, const RunOptions& opts) {
  if (topology.node_count != scenario.sensors) {
    throw ConfigError("topology size does not match the scenario sensor count");
  }
  const Trajectories traj = simulate_network(scenario, noise, schedule.horizon);
  return run_dls_on(traj, scenario.d, weights, schedule, opts, topology.diameter);
}

EstimateHistory run_standard_ls_on(const Trajectories& traj, const PolynomialInS& d_poly,
                                   const FusionSchedule& schedule, const RunOptions& opts) {
  const int sensors = static_cast<int>(traj.y.size());
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(sensors, sensors);
  return run_information_filter(traj, d_poly, identity, schedule, opts, 1, "standard_ls");
}

EstimateHistory run_standard_ls(const PlantScenario& scenario, const FusionSchedule& schedule,
                                const NoiseStream& noise, const RunOptions& opts) {
  const Trajectories traj = simulate_network(scenario, noise, schedule.horizon);
  return run_standard_ls_on(traj, scenario.d, schedule, opts);
}

RegressorStream::RegressorStream(const Trajectories& traj, int sensor)
    : traj_(traj), sensor_(sensor) {
  if (traj.layout.source == RegressorSource::Model) {
    if (traj.layout.r != 0) {
      throw ConfigError("regressor streams need r = 0; vhat is estimator state");
    }
    tape_y_ = std::make_unique<SignalTape>(traj.h, std::max(traj.layout.p - 1, 0));
    tape_u_ = std::make_unique<SignalTape>(traj.h, std::max(traj.layout.q - 1, 0));
    tape_y_->append(traj.y[sensor][0]);
    tape_u_->append(traj.u[sensor][0]);
  }
}

Eigen::VectorXd RegressorStream::next() {
  if (done()) throw ConfigError("regressor stream exhausted");
  Eigen::VectorXd phi;
  if (traj_.layout.source == RegressorSource::Exogenous) {
    phi = traj_.phi0[sensor_].col(m_);
  } else {
    phi = build_regressor(traj_.layout, *tape_y_, *tape_u_, nullptr);
    tape_y_->append(traj_.y[sensor_][m_ + 1]);
    tape_u_->append(traj_.u[sensor_][m_ + 1]);
  }
  ++m_;
  return phi;
}

EstimateHistory run_coop_gradient_on(const Trajectories& traj, const Eigen::MatrixXd& weights,
                                     const GradientGains& gains, const FusionSchedule& schedule,
                                     const RunOptions& opts) {
  if (!(gains.gamma >= 0.0) || !(gains.beta >= 0.0)) {
    throw ConfigError("gradient gains must be non-negative");
  }
  const int sensors = static_cast<int>(traj.y.size());
  const int dim = traj.layout.dim;
  const int steps = traj.samples - 1;
  const double h = traj.h;

  EstimateHistory hist;
  hist.estimator = "coop_gradient";
  hist.sensors = sensors;
  hist.dim = dim;
  hist.h = h;
  hist.delta = schedule.delta;
  hist.horizon = schedule.horizon;
  hist.epochs = schedule.epochs();
  hist.alpha = opts.alpha;
  hist.theta_true = traj.theta_true;
  hist.traces.resize(sensors);

  std::vector<Eigen::VectorXd> theta(sensors);
  std::vector<RegressorStream> streams;
  streams.reserve(sensors);
  for (int i = 0; i < sensors; ++i) {
    theta[i] = initial_theta(opts, dim, i);
    streams.emplace_back(traj, i);
  }

  const int stride = std::max(1, opts.stride);
  auto record = [&](int m) {
    for (int i = 0; i < sensors; ++i) {
      hist.traces[i].t.push_back(traj.t(m));
      hist.traces[i].theta.push_back(theta[i]);
    }
  };
  record(0);

  std::vector<Eigen::VectorXd> delta_theta(sensors, Eigen::VectorXd::Zero(dim));
  for (int m = 0; m < steps; ++m) {
    for (int i = 0; i < sensors; ++i) {
      const Eigen::VectorXd phi = streams[i].next();
      const double dy = traj.y[i][m + 1] - traj.y[i][m];
      delta_theta[i] = gains.gamma * phi * (dy - phi.dot(theta[i]) * h);
      for (int j = 0; j < sensors; ++j) {
        const double a = weights(i, j);
        if (a == 0.0 || j == i) continue;
        delta_theta[i] += gains.beta * h * a * (theta[j] - theta[i]);
      }
    }
    for (int i = 0; i < sensors; ++i) {
      theta[i] += delta_theta[i];
      if (!theta[i].allFinite()) {
        throw NumericalAbort("cooperative gradient diverged", h * (m + 1), i + 1);
      }
    }
    hist.step_count += sensors;
    if ((m + 1) % stride == 0 || m + 1 == steps) record(m + 1);
  }
  hist.final_theta = theta;
  return hist;
}

EstimateHistory run_coop_gradient(const PlantScenario& scenario, const NetworkTopology& topology,
                                  const Eigen::MatrixXd& weights, const GradientGains& gains,
                                  const FusionSchedule& schedule, const NoiseStream& noise,
                                  const RunOptions& opts) {
  if (topology.node_count != scenario.sensors) {
    throw ConfigError("topology size does not match the scenario sensor count");
  }
  const Trajectories traj = simulate_network(scenario, noise, schedule.horizon);
  return run_coop_gradient_on(traj, weights, gains, schedule, opts);
}

}  // namespace dlsim
