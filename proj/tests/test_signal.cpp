#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dlsim/errors.hpp"
#include "dlsim/signal.hpp"

using namespace dlsim;

namespace {

SignalTape tape_of(double h, int order, int samples, double (*f)(double)) {
  SignalTape tape(h, order);
  for (int m = 0; m < samples; ++m) tape.append(f(h * m));
  return tape;
}

}  // namespace

TEST_CASE("repeated integrals of z = 1") {
  const double h = 0.01;
  auto tape = tape_of(h, 2, 101, [](double) { return 1.0; });
  const int m = 100;  // t = 1
  CHECK(tape.value(1, m) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(tape.value(2, m) == doctest::Approx(0.5).epsilon(1e-2));
  CHECK(tape.value(1, 0) == 0.0);
  CHECK(tape.value(2, 0) == 0.0);
}

TEST_CASE("integral of z = t at t = 1") {
  const double h = 0.001;
  auto tape = tape_of(h, 1, 1001, [](double t) { return t; });
  CHECK(tape.value(1, 1000) == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("integral of cos over a half period vanishes") {
  const double h = 0.001;
  const int samples = static_cast<int>(std::llround(M_PI / h)) + 1;
  auto tape = tape_of(h, 1, samples, [](double t) { return std::cos(t); });
  CHECK(std::abs(tape.value(1, samples - 1)) < 1e-3);
}

TEST_CASE("halving h at least halves the integration error on smooth signals") {
  auto run = [](double h, double (*f)(double), double exact) {
    const int samples = static_cast<int>(std::llround(1.0 / h)) + 1;
    auto tape = tape_of(h, 1, samples, f);
    return std::abs(tape.value(1, samples - 1) - exact);
  };
  const double exact_cos = std::sin(1.0);
  const double exact_exp = std::exp(1.0) - 1.0;
  for (auto [f, exact] : {std::pair{+[](double t) { return std::cos(t); }, exact_cos},
                          std::pair{+[](double t) { return std::exp(t); }, exact_exp}}) {
    const double e1 = run(2e-3, f, exact);
    const double e2 = run(1e-3, f, exact);
    CHECK(e2 <= 0.55 * e1);  // empirical order >= 1
  }
}

TEST_CASE("upcoming matches the value the next append materializes") {
  SignalTape tape(0.1, 3);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  tape.append(dist(rng));
  for (int m = 0; m < 50; ++m) {
    const double u1 = tape.upcoming(1);
    const double u2 = tape.upcoming(2);
    const double u3 = tape.upcoming(3);
    tape.append(dist(rng));
    const int last = tape.size() - 1;
    CHECK(tape.value(1, last) == u1);
    CHECK(tape.value(2, last) == u2);
    CHECK(tape.value(3, last) == u3);
  }
}

TEST_CASE("non-finite samples abort") {
  SignalTape tape(0.1, 1);
  tape.append(1.0);
  CHECK_THROWS_AS(tape.append(std::nan("")), NumericalAbort);
  CHECK_THROWS_AS(tape.append(std::numeric_limits<double>::infinity()), NumericalAbort);
}

TEST_CASE("apply_poly: monic degree 0 is the identity") {
  auto tape = tape_of(0.01, 0, 11, [](double t) { return 3.0 * t; });
  CHECK(apply_poly(PolynomialInS::one(), tape, 10) == tape.value(0, 10));
}

TEST_CASE("apply_poly: (1+S) on z = 1 at t = 2") {
  auto tape = tape_of(0.001, 1, 2001, [](double) { return 1.0; });
  const auto poly = PolynomialInS::monic({1.0});
  CHECK(apply_poly(poly, tape, 2000) == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("apply_poly: direct b = (2,3) on z = t at t = 1") {
  auto tape = tape_of(0.001, 1, 1001, [](double t) { return t; });
  const auto poly = PolynomialInS::direct({2.0, 3.0});
  CHECK(apply_poly(poly, tape, 1000) == doctest::Approx(3.5).epsilon(1e-3));
}

TEST_CASE("apply_poly rejects tapes with too few integral rows") {
  auto tape = tape_of(0.01, 1, 5, [](double t) { return t; });
  CHECK_THROWS_AS(apply_poly(PolynomialInS::monic({1.0, 2.0}), tape, 4), ConfigError);
}

TEST_CASE("apply_poly is linear in the tape") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  const double a = 1.3, b = -0.7;
  SignalTape t1(0.01, 3), t2(0.01, 3), mix(0.01, 3);
  for (int m = 0; m < 200; ++m) {
    const double z1 = dist(rng), z2 = dist(rng);
    t1.append(z1);
    t2.append(z2);
    mix.append(a * z1 + b * z2);
  }
  const auto poly = PolynomialInS::monic({0.4, -1.1, 2.0});
  const auto direct = PolynomialInS::direct({1.0, 0.5, 0.25});
  for (int m : {0, 57, 199}) {
    CHECK(apply_poly(poly, mix, m) ==
          doctest::Approx(a * apply_poly(poly, t1, m) + b * apply_poly(poly, t2, m))
              .epsilon(1e-9));
    CHECK(apply_poly(direct, mix, m) ==
          doctest::Approx(a * apply_poly(direct, t1, m) + b * apply_poly(direct, t2, m))
              .epsilon(1e-9));
  }
}

TEST_CASE("wiener increments are reproducible and respect the substream keys") {
  NoiseStream stream(42, 3, 0.01);
  const auto a = stream.wiener_increments(2, 100);
  const auto b = stream.wiener_increments(2, 100);
  CHECK(a == b);

  NoiseStream same(42, 3, 0.01);
  CHECK(same.wiener_increments(2, 100) == a);

  CHECK(stream.wiener_increments(3, 100) != a);
  CHECK(stream.wiener_increments(2, 100, 1) != a);
  NoiseStream other_rep(42, 4, 0.01);
  CHECK(other_rep.wiener_increments(2, 100) != a);
}

TEST_CASE("wiener increments match Normal(0, h) statistics") {
  const double h = 0.01;
  NoiseStream stream(2024, 0, h);
  const int n = 1'000'000;
  const auto inc = stream.wiener_increments(1, n);
  double sum = 0.0, sumsq = 0.0;
  for (double x : inc) {
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) <= 4.0 * std::sqrt(h / n));
  CHECK(std::abs(var - h) <= 0.01 * h);
}

TEST_CASE("increments of different sensors are uncorrelated") {
  const double h = 0.01;
  NoiseStream stream(77, 1, h);
  const int n = 200'000;
  const auto a = stream.wiener_increments(1, n);
  const auto b = stream.wiener_increments(2, n);
  double cross = 0.0;
  for (int i = 0; i < n; ++i) cross += a[i] * b[i];
  // Correlation estimate is O(1/sqrt(n)) for independent streams.
  CHECK(std::abs(cross / (n * h)) <= 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("spr: c = d passes with margin 1/2 on every grid point") {
  const auto grid = log_omega_grid(1e-3, 1e3, 500);
  for (const auto& poly :
       {PolynomialInS::one(), PolynomialInS::monic({0.5}), PolynomialInS::monic({1.0, 0.25})}) {
    const auto res = spr_check(poly, poly, grid);
    CHECK(res.passed);
    CHECK(res.min_margin == doctest::Approx(0.5).epsilon(1e-12));
    for (double omega : {1e-3, 1.0, 1e3}) {
      const auto single = spr_check(poly, poly, {omega});
      CHECK(single.min_margin == doctest::Approx(0.5).epsilon(1e-12));
    }
  }
}

TEST_CASE("spr: c = 1 + 0.5 S with d = 1 fails, margin -> -1/2 at low frequency") {
  const auto c = PolynomialInS::monic({0.5});
  const auto d = PolynomialInS::one();
  const auto res = spr_check(c, d, log_omega_grid(1e-3, 1e3, 2000));
  CHECK_FALSE(res.passed);
  CHECK(res.min_margin < -0.4999);
  CHECK(res.min_margin > -0.5);
  // Symbolic value: Re{i w /(0.5 + i w)} - 1/2 = w^2/(w^2 + 0.25) - 1/2.
  for (double omega : {1e-3, 1e-2, 0.5}) {
    const auto single = spr_check(c, d, {omega});
    const double expected = omega * omega / (omega * omega + 0.25) - 0.5;
    CHECK(single.min_margin == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("spr: c = 1, d = 1 + S has margin 1/2 at omega = 1") {
  const auto res = spr_check(PolynomialInS::one(), PolynomialInS::monic({1.0}), {1.0});
  CHECK(res.min_margin == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(res.passed);
}

TEST_CASE("spr reports the frequency where c(sigma) vanishes") {
  // c = 1 + S^2 vanishes at sigma = -i/w for w = 1.
  const auto c = PolynomialInS::monic({0.0, 1.0});
  const auto res = spr_check(c, PolynomialInS::one(), {0.5, 1.0, 2.0});
  CHECK_FALSE(res.passed);
  REQUIRE(res.failing_omega.has_value());
  CHECK(*res.failing_omega == 1.0);
}

TEST_CASE("monic polynomial roots via the companion matrix") {
  // 1 + 0.5 x has root -2.
  auto roots = monic_poly_roots(PolynomialInS::monic({0.5}));
  REQUIRE(roots.size() == 1);
  CHECK(roots[0].real() == doctest::Approx(-2.0).epsilon(1e-12));
  // 1 + x^2 has roots +-i.
  roots = monic_poly_roots(PolynomialInS::monic({0.0, 1.0}));
  REQUIRE(roots.size() == 2);
  for (const auto& r : roots) {
    CHECK(std::abs(r.real()) < 1e-12);
    CHECK(std::abs(std::abs(r.imag()) - 1.0) < 1e-12);
  }
}
