#include "cont_bernoulli.hpp"
#include "numerics.hpp"
#include "test_util.hpp"
#include "vae.hpp"

#include "doctest.h"

#include <cmath>

using namespace lipvae;
using testutil::rel_err;

namespace {

// Composite Simpson quadrature of exp(cb_log_density(., lambda)) over [0,1].
double density_mass(double lambda, int panels = 2000) {
  auto f = [&](double x) { return std::exp(cb_log_density(x, lambda)); };
  const double h = 1.0 / panels;
  double acc = f(0.0) + f(1.0);
  for (int i = 1; i < panels; ++i)
    acc += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return acc * h / 3.0;
}

// Normalizer through extended precision, away from the removable singularity.
long double log_normalizer_oracle(long double lambda) {
  const long double t = 1.0L - 2.0L * lambda;
  return std::log(2.0L) + std::log(std::atanh(t) / t);
}

}  // namespace

TEST_CASE("density integrates to one across the parameter range") {
  for (double lambda : {0.01, 0.3, 0.5, 0.7, 0.99}) {
    CHECK(std::abs(density_mass(lambda) - 1.0) <= 1e-3);
  }
}

TEST_CASE("uniform case: zero log-density everywhere") {
  CHECK(cb_log_normalizer(0.5) == std::log(2.0));
  for (double x : {0.0, 0.25, 0.5, 1.0})
    CHECK(std::abs(cb_log_density(x, 0.5)) <= 1e-12);
}

TEST_CASE("hand value at x=1, lambda=0.9") {
  const double got = cb_log_density(1.0, 0.9);
  const double want =
      double(log_normalizer_oracle(0.9L)) + std::log(0.9);
  CHECK(std::abs(got - want) <= 1e-12);
  CHECK(std::abs(got - 0.90498) <= 1e-5);
}

TEST_CASE("closed form matches the extended-precision oracle off the switch") {
  SeededRng rng(21);
  for (int i = 0; i < 500; ++i) {
    double lambda = rng.uniform(1e-5, 1.0 - 1e-5);
    if (std::abs(1.0 - 2.0 * lambda) < 2e-3) continue;
    CHECK(rel_err(cb_log_normalizer(lambda),
                  double(log_normalizer_oracle(lambda))) <= 1e-12);
  }
}

TEST_CASE("series branch agrees with the oracle near one half") {
  // The oracle's atanh(t)/t loses digits as t -> 0 but long double keeps
  // enough headroom at |t| >= 1e-5 to check the 1e-10 level.
  for (double t : {1e-5, 1e-4, 5e-4, 9.9e-4}) {
    for (double sign : {-1.0, 1.0}) {
      double lambda = (1.0 - sign * t) / 2.0;
      CHECK(std::abs(cb_log_normalizer(lambda) -
                     double(log_normalizer_oracle(lambda))) <= 1e-10);
    }
  }
}

TEST_CASE("log-normalizer is continuous across the series switch") {
  CHECK(std::abs(cb_log_normalizer(0.5 + 1e-4) - cb_log_normalizer(0.5 - 1e-4)) <
        1e-6);
  // Straddle the switch boundary itself on both sides.  Just outside the
  // switch the closed form subtracts nearly equal logs, which costs a couple
  // of digits, so the seam is tight to ~1e-12 rather than machine epsilon.
  for (double sign : {-1.0, 1.0}) {
    double just_in = (1.0 - sign * (kCbTaylorSwitch - 1e-9)) / 2.0;
    double just_out = (1.0 - sign * (kCbTaylorSwitch + 1e-9)) / 2.0;
    CHECK(std::abs(cb_log_normalizer(just_in) - cb_log_normalizer(just_out)) <=
          1e-11);
  }
}

TEST_CASE("log-normalizer is symmetric and minimal at one half") {
  SeededRng rng(22);
  for (int i = 0; i < 200; ++i) {
    double lambda = rng.uniform(1e-4, 0.5);
    CHECK(std::abs(cb_log_normalizer(lambda) - cb_log_normalizer(1.0 - lambda)) <=
          1e-12);
    CHECK(cb_log_normalizer(lambda) >= std::log(2.0));
  }
}

TEST_CASE("parameters clamp at the boundary") {
  CHECK(cb_log_normalizer(0.0) == cb_log_normalizer(kCbLambdaMin));
  CHECK(cb_log_normalizer(1.0) == cb_log_normalizer(1.0 - kCbLambdaMin));
  CHECK(cb_log_density(0.5, -3.0) == cb_log_density(0.5, kCbLambdaMin));
  CHECK(std::isfinite(cb_log_density(1.0, 0.0)));
  CHECK(std::isfinite(cb_log_density(0.0, 1.0)));
}

TEST_CASE("parameter derivative matches finite differences") {
  SeededRng rng(23);
  for (int i = 0; i < 100; ++i) {
    double lambda = rng.uniform(0.05, 0.95);
    double x = rng.uniform(0.0, 1.0);
    auto f = [&](const Vec& l) { return cb_log_density(x, l[0]); };
    Vec l(1);
    l << lambda;
    Vec g = finite_diff_grad(f, l, 1e-6);
    CHECK(std::abs(cb_log_density_dlambda(x, lambda) - g[0]) <= 1e-5);
  }
  // Inside the series branch as well.
  auto f = [&](const Vec& l) { return cb_log_normalizer(l[0]); };
  Vec l(1);
  l << 0.50002;
  Vec g = finite_diff_grad(f, l, 1e-7);
  CHECK(std::abs(cb_log_normalizer_dlambda(l[0]) - g[0]) <= 1e-5);
}

TEST_CASE("derivative is zero in the clamped region") {
  CHECK(cb_log_normalizer_dlambda(-0.1) == 0.0);
  CHECK(cb_log_density_dlambda(0.3, 1.0) == 0.0);
}

TEST_CASE("vector likelihood sums per-coordinate densities and checks range") {
  Vec x(3), lambda(3);
  x << 0.0, 0.5, 1.0;
  lambda << 0.2, 0.5, 0.9;
  double want = cb_log_density(0.0, 0.2) + cb_log_density(0.5, 0.5) +
                cb_log_density(1.0, 0.9);
  CHECK(cb_log_likelihood(x, lambda) == want);

  Vec bad(3);
  bad << 0.0, 1.5, 1.0;
  CHECK_THROWS_AS((void)cb_log_likelihood(bad, lambda), std::invalid_argument);
  Vec short_lambda(2);
  short_lambda << 0.2, 0.5;
  CHECK_THROWS_AS((void)cb_log_likelihood(x, short_lambda), shape_error);
}
