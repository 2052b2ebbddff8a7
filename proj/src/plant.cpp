#include "dlsim/plant.hpp"

#include <cmath>
#include <string>

#include "dlsim/errors.hpp"

namespace dlsim {

double Waveform::eval(double t) const {
  double acc = 0.0;
  for (const auto& s : sins) acc += s.amplitude * std::sin(s.frequency * t + s.phase);
  double tp = 1.0;
  for (double coeff : poly) {
    acc += coeff * tp;
    tp *= t;
  }
  return acc;
}

RegressorLayout PlantScenario::layout() const {
  RegressorLayout lay;
  lay.source = regressor_source;
  if (regressor_source == RegressorSource::Exogenous) {
    lay.dim = dim();
    return lay;
  }
  lay.p = a.degree();
  lay.q = b.degree();
  lay.r = c.degree();
  lay.dim = lay.p + lay.q + lay.r;
  return lay;
}

Eigen::VectorXd assemble_theta(const PolynomialInS& a, const PolynomialInS& b,
                               const PolynomialInS& c) {
  const int p = a.degree(), q = b.degree(), r = c.degree();
  Eigen::VectorXd theta(p + q + r);
  for (int i = 0; i < p; ++i) theta(i) = -a.coeffs()[i];
  for (int i = 0; i < q; ++i) theta(p + i) = b.coeffs()[i];
  for (int i = 0; i < r; ++i) theta(p + q + i) = c.coeffs()[i];
  return theta;
}

std::vector<Waveform> rlc_default_inputs() {
  const double hp = M_PI / 2.0;  // cos x = sin(x + pi/2)
  std::vector<Waveform> inputs(6);
  inputs[0].sins = {{2.0, 1.0, hp}};
  inputs[1].sins = {{1.0, 2.0, 0.0}};
  inputs[2].sins = {{3.0, 2.0, hp}};
  inputs[3].sins = {{2.0, 0.5, hp}, {1.0, 0.5, 0.0}};
  inputs[4].sins = {{1.0, 2.0, 0.0}, {3.0, 2.0, hp}};
  inputs[5].sins = {{5.0, 0.5, hp}};
  return inputs;
}

PlantScenario rlc_scenario(double R, double L, double C, std::vector<Waveform> inputs) {
  if (!(L > 0.0) || !(C > 0.0) || R < 0.0) {
    throw ConfigError("rlc_scenario needs L > 0, C > 0 and R >= 0");
  }
  PlantScenario sc;
  sc.kind = PlantKind::RlcStateSpace;
  if (inputs.empty()) inputs = rlc_default_inputs();
  sc.sensors = static_cast<int>(inputs.size());
  sc.inputs = std::move(inputs);
  sc.a = PolynomialInS::monic({R / L, 1.0 / (L * C)});
  sc.b = PolynomialInS::direct({1.0 / L});
  sc.c = PolynomialInS::one();
  sc.d = PolynomialInS::one();
  sc.theta = assemble_theta(sc.a, sc.b, sc.c);
  sc.noise = NoiseMode::Off;
  sc.rlc_R = R;
  sc.rlc_L = L;
  sc.rlc_C = C;
  return sc;
}

PlantScenario synthetic12_scenario() {
  PlantScenario sc;
  sc.kind = PlantKind::Synthetic12;
  sc.sensors = 12;
  sc.regressor_source = RegressorSource::Exogenous;
  sc.noise = NoiseMode::Regressor;
  sc.theta.resize(10);
  for (int i = 0; i < 10; ++i) sc.theta(i) = i + 1;
  return sc;
}

double synthetic12_drift(int sensor, double t) {
  switch (sensor % 3) {
    case 0: return 0.3 * t;
    case 1: return t;
    default: return t * t;
  }
}

int synthetic12_coordinate(int sensor) {
  const int tau = sensor % 10;
  return tau == 0 ? 10 : tau;
}

void integrate_rlc(double R, double L, double C, const Waveform& input, double h,
                   int steps, double eps0, double y0,
                   const std::vector<double>* wiener_increments,
                   std::vector<double>& eps_out, std::vector<double>& y_out) {
  eps_out.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  y_out.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  eps_out[0] = eps0;
  y_out[0] = y0;
  double eps = eps0, y = y0;
  for (int m = 0; m < steps; ++m) {
    const double t = h * m;
    const double dy = (-R * y - eps / C + input.eval(t)) / L;
    double y_next = y + h * dy;
    if (wiener_increments) y_next += (*wiener_increments)[m];
    const double eps_next = eps + h * y;  // S y carried exactly as state
    if (!std::isfinite(y_next) || !std::isfinite(eps_next)) {
      throw NumericalAbort("RLC state diverged", h * (m + 1), 0);
    }
    eps = eps_next;
    y = y_next;
    eps_out[m + 1] = eps;
    y_out[m + 1] = y;
  }
}

namespace {

int step_count(double horizon, double h) {
  if (!(h > 0.0) || !(horizon > 0.0)) {
    throw ConfigError("simulate_network needs positive T and h");
  }
  const double ratio = horizon / h;
  const long long steps = std::llround(ratio);
  if (steps < 1 || std::abs(ratio - static_cast<double>(steps)) > 1e-6) {
    throw ConfigError("h must divide the horizon T");
  }
  return static_cast<int>(steps);
}

std::vector<double> wiener_path(const NoiseStream& noise, int sensor, int steps,
                                int channel) {
  auto inc = noise.wiener_increments(sensor, steps, channel);
  std::vector<double> path(static_cast<std::size_t>(steps) + 1, 0.0);
  for (int m = 0; m < steps; ++m) path[m + 1] = path[m] + inc[m];
  return path;
}

void simulate_general(const PlantScenario& sc, const NoiseStream& noise, int steps,
                      double h, Trajectories& out) {
  const auto lay = sc.layout();
  const int rd = sc.d.degree();
  const int jy = lay.p;                       // model assembly needs S^p y
  const int ju = lay.q;
  const int jv = std::max(lay.r, rd);
  const auto& ac = sc.a.coeffs();
  const auto& bc = sc.b.coeffs();
  const auto& cc = sc.c.coeffs();
  const auto& dc = sc.d.coeffs();

  for (int i = 0; i < sc.sensors; ++i) {
    SignalTape ty(h, jy), tu(h, ju), tv(h, jv);
    std::vector<double> w;
    if (sc.noise == NoiseMode::Wiener) {
      w = wiener_path(noise, i + 1, steps, 0);
    } else {
      w.assign(static_cast<std::size_t>(steps) + 1, 0.0);
    }
    for (int m = 0; m <= steps; ++m) {
      const double t = h * m;
      tu.append(sc.inputs[i].eval(t));
      // d(S) v = w, explicit because S^l v at t_m ignores v(t_m).
      double v = w[m];
      for (int l = 1; l <= rd; ++l) v -= dc[l - 1] * (m == 0 ? 0.0 : tv.upcoming(l));
      tv.append(v);
      // a(S) y = S b(S) u + c(S) v, solved for y(t_m) the same way.
      double ysum = v;
      for (int l = 1; l <= lay.r; ++l) ysum += cc[l - 1] * tv.value(l, m);
      for (int l = 1; l <= lay.q; ++l) ysum += bc[l - 1] * tu.value(l, m);
      for (int l = 1; l <= lay.p; ++l) ysum -= ac[l - 1] * (m == 0 ? 0.0 : ty.upcoming(l));
      if (!std::isfinite(ysum)) {
        throw NumericalAbort("plant output diverged (unstable scenario)", t, i + 1);
      }
      ty.append(ysum);

      out.y[i][m] = ysum;
      out.u[i][m] = tu.value(0, m);
      out.v[i][m] = v;
      auto phi = out.phi0[i].col(m);
      for (int l = 0; l < lay.p; ++l) phi(l) = ty.value(l, m);
      for (int l = 0; l < lay.q; ++l) phi(lay.p + l) = tu.value(l, m);
      for (int l = 0; l < lay.r; ++l) phi(lay.p + lay.q + l) = tv.value(l, m);
    }
  }
}

void simulate_rlc(const PlantScenario& sc, const NoiseStream& noise, int steps,
                  double h, Trajectories& out) {
  for (int i = 0; i < sc.sensors; ++i) {
    std::vector<double> w_inc;
    const std::vector<double>* w_ptr = nullptr;
    if (sc.noise == NoiseMode::Wiener) {
      w_inc = noise.wiener_increments(i + 1, steps, 0);
      w_ptr = &w_inc;
    }
    std::vector<double> eps, y;
    integrate_rlc(sc.rlc_R, sc.rlc_L, sc.rlc_C, sc.inputs[i], h, steps, 0.0, 0.0,
                  w_ptr, eps, y);
    double wsum = 0.0;
    for (int m = 0; m <= steps; ++m) {
      const double um = sc.inputs[i].eval(h * m);
      out.y[i][m] = y[m];
      out.u[i][m] = um;
      if (m > 0 && w_ptr) wsum += w_inc[m - 1];
      out.v[i][m] = wsum;  // d(S) = 1 so v = w
      out.phi0[i](0, m) = y[m];
      out.phi0[i](1, m) = eps[m];
      out.phi0[i](2, m) = um;
    }
  }
}

void simulate_synthetic12(const PlantScenario& sc, const NoiseStream& noise,
                          int steps, double h, Trajectories& out) {
  // Off: fully deterministic drift. Wiener: observation noise only.
  // Regressor (the reference configuration): observation noise plus the
  // Wiener disturbance inside the regressors.
  const std::vector<double> zeros(static_cast<std::size_t>(steps) + 1, 0.0);
  for (int i = 0; i < sc.sensors; ++i) {
    const int coord = synthetic12_coordinate(i + 1) - 1;
    const auto v = sc.noise == NoiseMode::Off ? zeros : wiener_path(noise, i + 1, steps, 0);
    const auto xi = sc.noise == NoiseMode::Regressor ? wiener_path(noise, i + 1, steps, 1)
                                                     : zeros;
    SignalTape psi(h, 1);  // running integral of theta^T phi0
    for (int m = 0; m <= steps; ++m) {
      const double x = synthetic12_drift(i + 1, h * m) + xi[m];
      const double integral = (m == 0) ? 0.0 : psi.upcoming_first();
      psi.append(sc.theta(coord) * x);
      out.u[i][m] = 0.0;
      out.v[i][m] = v[m];
      out.y[i][m] = integral + v[m];
      out.phi0[i].col(m).setZero();
      out.phi0[i](coord, m) = x;
    }
  }
}

}  // namespace

Trajectories simulate_network(const PlantScenario& scenario, const NoiseStream& noise,
                              double horizon) {
  const double h = noise.step();
  const int steps = step_count(horizon, h);
  if (scenario.sensors < 1) throw ConfigError("scenario needs at least one sensor");
  if (scenario.kind != PlantKind::Synthetic12 &&
      static_cast<int>(scenario.inputs.size()) != scenario.sensors) {
    throw ConfigError("scenario needs one input waveform per sensor");
  }

  Trajectories out;
  out.h = h;
  out.samples = steps + 1;
  out.theta_true = scenario.theta;
  out.layout = scenario.layout();
  out.y.assign(scenario.sensors, std::vector<double>(out.samples, 0.0));
  out.u = out.y;
  out.v = out.y;
  out.phi0.assign(scenario.sensors, Eigen::MatrixXd::Zero(out.layout.dim, out.samples));

  switch (scenario.kind) {
    case PlantKind::General:
      simulate_general(scenario, noise, steps, h, out);
      break;
    case PlantKind::RlcStateSpace:
      simulate_rlc(scenario, noise, steps, h, out);
      break;
    case PlantKind::Synthetic12:
      simulate_synthetic12(scenario, noise, steps, h, out);
      break;
  }
  return out;
}

}  // namespace dlsim
