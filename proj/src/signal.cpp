#include "dlsim/signal.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "dlsim/errors.hpp"

namespace dlsim {

PolynomialInS PolynomialInS::monic(std::vector<double> coeffs) {
  return PolynomialInS(Form::Monic, std::move(coeffs));
}

PolynomialInS PolynomialInS::direct(std::vector<double> coeffs) {
  if (coeffs.empty()) {
    throw ConfigError("direct polynomial b(S) needs at least one tap (q >= 1)");
  }
  return PolynomialInS(Form::Direct, std::move(coeffs));
}

int PolynomialInS::max_integral_order() const {
  if (form_ == Form::Monic) return degree();
  return degree() - 1;
}

std::complex<double> PolynomialInS::eval_sigma(std::complex<double> sigma) const {
  std::complex<double> acc(0.0, 0.0);
  // Horner from the highest power down.
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) {
    acc = acc * sigma + *it;
  }
  if (form_ == Form::Monic) return acc * sigma + 1.0;
  return acc;
}

SignalTape::SignalTape(double step, int max_order) : h_(step), max_order_(max_order) {
  if (!(step > 0.0)) throw ConfigError("SignalTape step must be positive");
  if (max_order < 0) throw ConfigError("SignalTape max_order must be >= 0");
  rows_.resize(max_order + 1);
  trap_.assign(max_order + 1, 0.0);
}

void SignalTape::append(double value) {
  if (!std::isfinite(value)) {
    throw NumericalAbort("non-finite sample appended to signal tape",
                         h_ * static_cast<double>(size()), 0);
  }
  if (rows_[0].empty()) {
    rows_[0].push_back(value);
    for (int j = 1; j <= max_order_; ++j) rows_[j].push_back(0.0);  // (S^j z)(0) = 0
    return;
  }
  rows_[0].push_back(value);
  const int m = static_cast<int>(rows_[0].size()) - 1;
  for (int j = 1; j <= max_order_; ++j) {
    const double prev_above = rows_[j - 1][m - 1];
    const double new_value = trap_[j] + h_ * prev_above;
    trap_[j] += 0.5 * h_ * (prev_above + rows_[j - 1][m]);
    rows_[j].push_back(new_value);
  }
}

double SignalTape::upcoming(int order) const {
  if (order < 1 || order > max_order_) {
    throw ConfigError("upcoming order out of range");
  }
  if (rows_[0].empty()) return 0.0;
  return trap_[order] + h_ * rows_[order - 1].back();
}

double apply_poly(const PolynomialInS& poly, const SignalTape& tape, int m) {
  if (poly.max_integral_order() > tape.max_order()) {
    throw ConfigError("tape max order " + std::to_string(tape.max_order()) +
                      " too small for polynomial needing order " +
                      std::to_string(poly.max_integral_order()));
  }
  const auto& c = poly.coeffs();
  if (poly.form() == PolynomialInS::Form::Monic) {
    double acc = tape.value(0, m);
    for (int l = 1; l <= poly.degree(); ++l) acc += c[l - 1] * tape.value(l, m);
    return acc;
  }
  double acc = 0.0;
  for (int l = 1; l <= poly.degree(); ++l) acc += c[l - 1] * tape.value(l - 1, m);
  return acc;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// xoshiro-style substream engine seeded from the hashed key; kept tiny and
// platform-deterministic (std distributions are not portable across libs).
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : state_(seed) {
    for (int i = 0; i < 4; ++i) s_[i] = splitmix64(state_);
  }

  double normal() {
    // Box-Muller, one draw per pair (the second is discarded to keep the
    // stream shape independent of the call pattern).
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t next() {  // xoshiro256**
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  std::uint64_t state_;
  std::uint64_t s_[4];
};

}  // namespace

NoiseStream::NoiseStream(std::uint64_t root_seed, std::uint64_t replication,
                         double step)
    : root_(root_seed), replication_(replication), h_(step) {
  if (!(step > 0.0)) throw ConfigError("NoiseStream step must be positive");
}

std::vector<double> NoiseStream::wiener_increments(int sensor, int count,
                                                   int channel) const {
  std::uint64_t key = root_;
  std::uint64_t mix = key;
  splitmix64(mix);
  std::uint64_t acc = mix;
  acc ^= splitmix64(acc) + 0x100000001b3ULL * (replication_ + 1);
  acc ^= splitmix64(acc) + 0x100000001b3ULL * (static_cast<std::uint64_t>(sensor) + 1);
  acc ^= splitmix64(acc) + 0x100000001b3ULL * (static_cast<std::uint64_t>(channel) + 1);
  Gaussian gen(acc);
  const double sd = std::sqrt(h_);
  std::vector<double> out(static_cast<std::size_t>(count));
  for (auto& x : out) x = sd * gen.normal();
  return out;
}

SprResult spr_check(const PolynomialInS& c, const PolynomialInS& d,
                    const std::vector<double>& omega_grid) {
  SprResult result;
  result.min_margin = std::numeric_limits<double>::infinity();
  for (double omega : omega_grid) {
    if (!(omega > 0.0)) throw ConfigError("SPR grid frequencies must be positive");
    const std::complex<double> sigma(0.0, -1.0 / omega);  // 1/(i*omega)
    const std::complex<double> cv = c.eval_sigma(sigma);
    if (std::abs(cv) < 1e-300) {
      result.passed = false;
      result.failing_omega = omega;
      result.min_margin = -std::numeric_limits<double>::infinity();
      return result;
    }
    const double margin = (d.eval_sigma(sigma) / cv).real() - 0.5;
    result.min_margin = std::min(result.min_margin, margin);
  }
  result.passed = result.min_margin > 0.0;
  return result;
}

std::vector<double> log_omega_grid(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi > lo) || count < 2) {
    throw ConfigError("log_omega_grid needs 0 < lo < hi and count >= 2");
  }
  std::vector<double> grid(static_cast<std::size_t>(count));
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < count; ++i) {
    grid[i] = std::exp(llo + (lhi - llo) * i / (count - 1));
  }
  return grid;
}

std::vector<std::complex<double>> monic_poly_roots(const PolynomialInS& poly) {
  if (poly.form() != PolynomialInS::Form::Monic) {
    throw ConfigError("monic_poly_roots expects a monic polynomial");
  }
  const int r = poly.degree();
  if (r == 0) return {};
  const auto& c = poly.coeffs();
  if (c[r - 1] == 0.0) {
    throw ConfigError("leading coefficient is zero; trim the polynomial");
  }
  // Companion matrix of c_r x^r + ... + c_1 x + 1.
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(r, r);
  for (int i = 1; i < r; ++i) comp(i, i - 1) = 1.0;
  comp(0, r - 1) = -1.0 / c[r - 1];
  for (int i = 1; i < r; ++i) comp(i, r - 1) = -c[i - 1] / c[r - 1];
  Eigen::EigenSolver<Eigen::MatrixXd> solver(comp);
  std::vector<std::complex<double>> roots(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) roots[i] = solver.eigenvalues()(i);
  return roots;
}

}  // namespace dlsim
