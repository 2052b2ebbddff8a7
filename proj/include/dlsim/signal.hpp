#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

namespace dlsim {

/// Polynomial in the integral operator S, in one of two forms:
///   Monic:  1 + c_1 S + ... + c_r S^r          (a(S), c(S), d(S))
///   Direct: b_1 + b_2 S + ... + b_q S^{q-1}    (b(S))
class PolynomialInS {
 public:
  enum class Form { Monic, Direct };

  static PolynomialInS monic(std::vector<double> coeffs);
  static PolynomialInS direct(std::vector<double> coeffs);
  static PolynomialInS one() { return monic({}); }   // the identity filter

  Form form() const { return form_; }
  const std::vector<double>& coeffs() const { return coeffs_; }

  /// Monic: r (number of S-coefficients). Direct: q (number of taps).
  int degree() const { return static_cast<int>(coeffs_.size()); }

  /// Highest repeated-integral order a tape needs so apply() works.
  int max_integral_order() const;

  /// Frequency response with S replaced by sigma (= 1/(i*omega) on the
  /// imaginary-frequency grid used by the SPR check).
  std::complex<double> eval_sigma(std::complex<double> sigma) const;

  bool operator==(const PolynomialInS&) const = default;

 private:
  PolynomialInS(Form form, std::vector<double> coeffs)
      : form_(form), coeffs_(std::move(coeffs)) {}
  Form form_;
  std::vector<double> coeffs_;
};

/// Uniformly sampled signal z(t_m), t_m = m*h, together with its repeated
/// integrals (S^j z) maintained online up to a configured max order.
///
/// Discretization: each integral row is the cumulative trapezoid of the row
/// above over [0, t_{m-1}] plus a left-endpoint increment on the newest
/// sub-interval, so (S^j z)(t_m) never depends on z(t_m). That keeps the
/// plant equations explicit when y(t_m) is assembled from S^l y at t_m.
class SignalTape {
 public:
  SignalTape(double step, int max_order);

  /// Appends z(t_m) and extends every integral row. O(max_order) per call.
  /// Throws NumericalAbort on a non-finite value.
  void append(double value);

  int size() const { return static_cast<int>(rows_[0].size()); }
  double step() const { return h_; }
  int max_order() const { return max_order_; }

  /// (S^order z)(t_m); order 0 is the raw signal.
  double value(int order, int m) const { return rows_[order][m]; }
  double latest(int order) const { return rows_[order].back(); }
  const std::vector<double>& row(int order) const { return rows_[order]; }

  /// The integral values the NEXT sample will receive, i.e. (S^j z)(t_m) for
  /// m = size(). They depend only on data already appended, which is what
  /// makes implicit-looking plant equations explicit on the grid.
  /// upcoming(j) with j >= 1; upcoming_first() is the j = 1 shortcut.
  double upcoming(int order) const;
  double upcoming_first() const { return upcoming(1); }

 private:
  double h_;
  int max_order_;
  std::vector<std::vector<double>> rows_;  // rows_[j][m] = (S^j z)(t_m)
  std::vector<double> trap_;               // trapezoid accumulators, per order
};

/// Evaluates poly applied to the tape at sample m:
///   Monic:  z(t_m) + sum_l c_l (S^l z)(t_m)
///   Direct: sum_l b_l (S^{l-1} z)(t_m)
/// Throws ConfigError if the tape's max order is too small.
double apply_poly(const PolynomialInS& poly, const SignalTape& tape, int m);

/// Reproducible Wiener increment source. One root seed; the substream for
/// (replication, sensor, channel) is derived by hashing, so replications and
/// sensors are independent and any call sequence is deterministic. A call
/// always restarts its substream: identical arguments, identical sequence.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t root_seed, std::uint64_t replication, double step);

  /// `count` i.i.d. Normal(0, h) increments for the sensor's channel 0.
  std::vector<double> wiener_increments(int sensor, int count) const {
    return wiener_increments(sensor, count, 0);
  }
  /// Channels separate independent processes per sensor (channel 0 is the
  /// observation noise, channel 1 the regressor noise of the synthetic case).
  std::vector<double> wiener_increments(int sensor, int count, int channel) const;

  double step() const { return h_; }
  std::uint64_t root_seed() const { return root_; }
  std::uint64_t replication() const { return replication_; }

 private:
  std::uint64_t root_;
  std::uint64_t replication_;
  double h_;
};

struct SprResult {
  bool passed = false;
  double min_margin = 0.0;
  std::optional<double> failing_omega;  // set when c(sigma) vanished on the grid
};

/// Numeric check of the strictly-positive-real condition on d(S)/c(S) - 1/2.
/// Evaluates Re{d(sigma)/c(sigma)} - 1/2 at sigma = 1/(i*omega) over the grid;
/// passes iff the minimum margin is positive. If |c(sigma)| is numerically
/// zero at some grid point the check fails and reports that omega.
SprResult spr_check(const PolynomialInS& c, const PolynomialInS& d,
                    const std::vector<double>& omega_grid);

/// Log-spaced frequency grid, the default SPR grid being
/// log_omega_grid(1e-3, 1e3, 2000).
std::vector<double> log_omega_grid(double lo, double hi, int count);

/// Roots of the polynomial 1 + c_1 x + ... + c_r x^r via the companion
/// matrix; diagnostic for the "stable filter" wording on d(S).
std::vector<std::complex<double>> monic_poly_roots(const PolynomialInS& poly);

}  // namespace dlsim
