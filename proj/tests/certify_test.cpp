#include "certify.hpp"

#include "numerics.hpp"
#include "test_util.hpp"

#include "doctest.h"

#include <cmath>
#include <string>

using namespace lipvae;

namespace {

// Literal transcription of the bound formulas in extended precision,
// structured independently of the library implementation.
struct OracleBound {
  long double p1;
  long double p2;
  long double lower;
};

long double log_c_oracle(long double d) {
  return -0.5L * std::log((long double)M_PI) +
         0.5L * (d - (d - 1.0L) * std::log(d));
}

OracleBound transcription_oracle(const CertConstants& c, double delta) {
  const long double a = c.decoder_lipschitz;
  const long double b = c.encoder_mean_lipschitz;
  const long double cc = c.encoder_std_lipschitz;
  const long double sn = c.sigma_norm;
  const long double r = c.r;
  const long double d = (long double)c.latent_dim;
  const long double t = delta;

  const long double noise = cc * t + 2.0L * sn;
  long double p1 = a * a * (b * b * t * t + noise * noise) / (r * r);
  if (p1 > 1.0L) p1 = 1.0L;

  long double p2;
  const long double head = r / a - b * t;
  if (head < 0.0L || d < 2.0L) {
    p2 = 1.0L;
  } else if (noise == 0.0L) {
    p2 = head > 0.0L ? 0.0L : 1.0L;
  } else {
    const long double u = (head / noise) * (head / noise);
    if (!(u > d - 2.0L)) {
      p2 = 1.0L;
    } else {
      const long double logp2 = log_c_oracle(d) + 0.5L * d * std::log(u) -
                                0.5L * u - std::log(u - d + 2.0L);
      p2 = logp2 >= 0.0L ? 1.0L : std::exp(logp2);
    }
  }
  return {p1, p2, 1.0L - std::min(p1, p2)};
}

CertConstants fig_constants() {
  CertConstants c;
  c.decoder_lipschitz = 5.0;
  c.encoder_mean_lipschitz = 5.0;
  c.encoder_std_lipschitz = 5.0;
  c.sigma_norm = 0.1;
  c.latent_dim = 5;
  c.r = 8.0;
  return c;
}

CertConstants random_constants(SeededRng& rng) {
  CertConstants c;
  c.decoder_lipschitz = rng.uniform(0.3, 10.0);
  c.encoder_mean_lipschitz = rng.uniform(0.3, 10.0);
  c.encoder_std_lipschitz =
      rng.uniform01() < 0.3 ? 0.0 : rng.uniform(0.0, 8.0);
  c.sigma_norm = rng.uniform01() < 0.2 ? 0.0 : rng.uniform(0.0, 2.0);
  c.latent_dim = 1 + Index(rng.next_u64() % 50);
  c.r = rng.uniform(0.1, 20.0);
  return c;
}

}  // namespace

TEST_CASE("tail constant against high-precision evaluation") {
  CHECK(testutil::rel_err(log_c_of_dz(1), double(log_c_oracle(1.0L))) <= 1e-15);
  CHECK(testutil::rel_err(c_of_dz(1), double(std::exp(log_c_oracle(1.0L)))) <=
        1e-14);
  CHECK(testutil::rel_err(c_of_dz(5), double(std::exp(log_c_oracle(5.0L)))) <=
        1e-14);
  // Hand values: e^0.5/sqrt(pi) and e^2.5/(25 sqrt(pi)).
  CHECK(std::abs(c_of_dz(1) - 0.93019) <= 1e-5);
  CHECK(std::abs(c_of_dz(5) - 0.27493) <= 1e-5);
  // The direct value underflows for very large dimensions; positivity is
  // asserted through finiteness of the log form.
  for (Index dz : {1, 2, 7, 50, 300})
    CHECK(c_of_dz(dz) > 0.0);
  for (Index dz = 1; dz <= 10000; dz += 99)
    CHECK(std::isfinite(log_c_of_dz(dz)));
  CHECK_THROWS_AS((void)log_c_of_dz(0), std::invalid_argument);
}

TEST_CASE("quadratic part on worked values") {
  CertConstants c = fig_constants();
  CHECK(std::abs(probability_bound(c, 0.0).p1 - 0.015625) <= 1e-15);
  CHECK(std::abs(probability_bound(c, 0.2).p1 - 0.953125) <= 1e-15);
  CHECK(probability_bound(c, 0.3).p1 == 1.0);

  // At delta = 0 the tail term is astronomically small and wins the min.
  ProbabilityBound at0 = probability_bound(c, 0.0);
  CHECK(at0.p2_is_min);
  CHECK(at0.lower_bound == 1.0 - std::min(at0.p1, at0.p2));

  // With the tail branch unavailable the quadratic part alone sets the
  // bound: 1 - 0.015625.
  CertConstants cq = c;
  cq.latent_dim = 1;
  ProbabilityBound quad_only = probability_bound(cq, 0.0);
  CHECK(quad_only.p2 == 1.0);
  CHECK(std::abs(quad_only.lower_bound - 0.984375) <= 1e-15);
}

TEST_CASE("tail part on worked values") {
  CertConstants c = fig_constants();
  ProbabilityBound big = probability_bound(c, 0.1);
  CHECK(big.p2 == 1.0);
  CHECK(big.branch == TailBranch::kShapeTooSmall);

  ProbabilityBound small = probability_bound(c, 0.02);
  CHECK(small.branch == TailBranch::kValid);
  CHECK(std::abs(small.p2 - 1.455e-4) <= 5e-8);
  OracleBound want = transcription_oracle(c, 0.02);
  CHECK(std::abs(small.p2 - double(want.p2)) <= 1e-12);

  CertConstants narrow = c;
  narrow.latent_dim = 1;
  ProbabilityBound one = probability_bound(narrow, 0.02);
  CHECK(one.p2 == 1.0);
  CHECK(one.branch == TailBranch::kLatentDimTooSmall);
}

TEST_CASE("oversized perturbations and vacuous bounds") {
  CertConstants c = fig_constants();
  ProbabilityBound far = probability_bound(c, 1.0);
  CHECK(far.branch == TailBranch::kDeltaTooLarge);
  CHECK(far.p2 == 1.0);
  CHECK(far.p1 == 1.0);
  CHECK(far.lower_bound == 0.0);
}

TEST_CASE("deterministic encoders concentrate the tail") {
  CertConstants c;
  c.decoder_lipschitz = 2.0;
  c.encoder_mean_lipschitz = 3.0;
  c.encoder_std_lipschitz = 0.0;
  c.sigma_norm = 0.0;
  c.latent_dim = 4;
  c.r = 6.0;
  ProbabilityBound pb = probability_bound(c, 0.5);
  CHECK(pb.p2 == 0.0);
  CHECK(pb.branch == TailBranch::kDeterministicLimit);
  CHECK(pb.p1 == std::min(1.0, 4.0 * 9.0 * 0.25 / 36.0));
  CHECK(pb.lower_bound == 1.0);
}

TEST_CASE("bound formulas match the transcription oracle on random inputs") {
  SeededRng rng(101);
  for (int i = 0; i < 1000; ++i) {
    CertConstants c = random_constants(rng);
    const double t_max = 1.5 * c.r /
                         (c.decoder_lipschitz * c.encoder_mean_lipschitz);
    const double delta = rng.uniform(0.0, t_max);
    ProbabilityBound got = probability_bound(c, delta);
    OracleBound want = transcription_oracle(c, delta);
    CHECK(std::abs(got.p1 - double(want.p1)) <=
          1e-12 * std::max(1.0, std::abs(double(want.p1))));
    CHECK(std::abs(got.p2 - double(want.p2)) <=
          1e-12 * std::max(1.0, std::abs(double(want.p2))));
    CHECK(std::abs(got.lower_bound - double(want.lower)) <= 1e-12);
    CHECK(got.p1 >= 0.0);
    CHECK(got.p1 <= 1.0);
    CHECK(got.p2 >= 0.0);
    CHECK(got.p2 <= 1.0);
    CHECK(got.lower_bound >= 0.0);
    CHECK(got.lower_bound <= 1.0);
  }
}

TEST_CASE("monotonicity of the parts and the bound") {
  SeededRng rng(102);
  for (int rep = 0; rep < 20; ++rep) {
    CertConstants c = random_constants(rng);
    const double t_hi = c.r / (c.decoder_lipschitz * c.encoder_mean_lipschitz);
    double prev_p1 = -1.0, prev_p2 = -1.0, prev_lb = 2.0;
    for (int i = 0; i <= 400; ++i) {
      const double t = t_hi * i / 400.0;
      ProbabilityBound pb = probability_bound(c, t);
      CHECK(pb.p1 >= prev_p1 - 1e-12);
      CHECK(pb.p2 >= prev_p2 - 1e-12);
      CHECK(pb.lower_bound <= prev_lb + 1e-12);
      prev_p1 = pb.p1;
      prev_p2 = pb.p2;
      prev_lb = pb.lower_bound;
    }
  }
  // The quadratic part falls as the distance threshold grows.
  CertConstants c = fig_constants();
  double prev = 2.0;
  for (double r = 1.0; r <= 40.0; r += 0.5) {
    CertConstants cr = c;
    cr.r = r;
    double p1 = probability_bound(cr, 0.05).p1;
    CHECK(p1 <= prev + 1e-12);
    prev = p1;
  }
}

TEST_CASE("quadratic margin on worked values") {
  CertConstants c = fig_constants();
  c.sigma_norm = 0.0;
  MarginBound mb = margin_bound(c);
  REQUIRE(mb.m1.has_value());
  CHECK(std::abs(*mb.m1 - 0.16) <= 1e-15);
  CHECK(mb.margin >= 0.16);
}

TEST_CASE("quadratic margin disappears when the posterior is too wide") {
  CertConstants c;
  c.decoder_lipschitz = 5.0;
  c.encoder_mean_lipschitz = 5.0;
  c.encoder_std_lipschitz = 0.0;
  c.sigma_norm = 0.6;  // 4 sn^2 = 1.44 >= half (r/a)^2 = 1.28
  c.r = 8.0;
  c.latent_dim = 5;
  MarginBound mb = margin_bound(c);
  CHECK(!mb.m1.has_value());
  CHECK(mb.margin == mb.m2);

  // With a two-dimensional latent the tail still certifies a radius.
  c.latent_dim = 2;
  MarginBound mb2 = margin_bound(c);
  CHECK(!mb2.m1.has_value());
  CHECK(mb2.m2 > 0.0);
  CHECK(mb2.margin == mb2.m2);
}

TEST_CASE("quadratic root substitutes back to one half") {
  SeededRng rng(103);
  int checked = 0;
  while (checked < 100) {
    CertConstants c;
    c.decoder_lipschitz = rng.uniform(0.5, 6.0);
    c.encoder_mean_lipschitz = rng.uniform(0.5, 6.0);
    c.encoder_std_lipschitz = rng.uniform(0.1, 5.0);
    c.r = rng.uniform(1.0, 10.0);
    const double cap = c.r / (2.0 * std::sqrt(2.0) * c.decoder_lipschitz);
    c.sigma_norm = rng.uniform(0.0, 0.9 * cap);
    c.latent_dim = 2 + Index(rng.next_u64() % 20);
    MarginBound mb = margin_bound(c);
    if (!mb.m1.has_value() || *mb.m1 <= 0.0) continue;
    ++checked;
    CHECK(std::abs(probability_bound(c, *mb.m1).p1 - 0.5) <= 1e-9);
  }
}

TEST_CASE("tail margin on worked values and the stopping contract") {
  CertConstants c = fig_constants();
  MarginBound mb = margin_bound(c);
  CHECK(mb.m2 > 0.02);
  CHECK(mb.m2 < 0.1);
  CHECK(!mb.m2_at_zero);
  CHECK(probability_bound(c, mb.m2).p2 <= 0.5);
  CHECK(probability_bound(c, mb.m2 + 1e-9).p2 > 0.5);

  CertConstants narrow = c;
  narrow.latent_dim = 1;
  MarginBound none = margin_bound(narrow);
  CHECK(none.m2 == 0.0);
  CHECK(none.m2_at_zero);
}

TEST_CASE("tail margin agrees with a brute-force grid") {
  CertConstants c = fig_constants();
  const double t_hi = c.r / (c.decoder_lipschitz * c.encoder_mean_lipschitz);
  const int n = 1000000;
  double best = 0.0;
  for (int i = n; i >= 0; --i) {
    const double t = t_hi * i / n;
    if (probability_bound(c, t).p2 <= 0.5) {
      best = t;
      break;
    }
  }
  MarginBound mb = margin_bound(c);
  CHECK(std::abs(mb.m2 - best) <= 2.0 * t_hi / n);
}

TEST_CASE("combined margin takes the larger certified radius") {
  CertConstants c = fig_constants();
  c.sigma_norm = 0.0;
  MarginBound mb = margin_bound(c);
  CHECK(mb.margin == std::max(mb.m1.value_or(0.0), mb.m2));

  // Both parts empty: wide posterior and a one-dimensional latent.
  CertConstants dead;
  dead.decoder_lipschitz = 5.0;
  dead.encoder_mean_lipschitz = 5.0;
  dead.encoder_std_lipschitz = 1.0;
  dead.sigma_norm = 2.0;
  dead.latent_dim = 1;
  dead.r = 8.0;
  MarginBound zero = margin_bound(dead);
  CHECK(!zero.m1.has_value());
  CHECK(zero.m2 == 0.0);
  CHECK(zero.margin == 0.0);
}

TEST_CASE("margin matches the definition-level grid oracle") {
  SeededRng rng(104);
  for (int rep = 0; rep < 100; ++rep) {
    CertConstants c = random_constants(rng);
    MarginBound mb = margin_bound(c);
    const double t_hi = c.r / (c.decoder_lipschitz * c.encoder_mean_lipschitz);
    const int n = 10000;
    double best = -1.0;
    for (int i = n; i >= 0; --i) {
      const double t = t_hi * i / n;
      if (probability_bound(c, t).lower_bound >= 0.5) {
        best = t;
        break;
      }
    }
    if (best < 0.0) {
      CHECK(mb.margin == 0.0);
    } else {
      CHECK(std::abs(mb.margin - best) <= 1.5 * t_hi / n + 1e-8);
    }
  }
}

TEST_CASE("bound at the margin stays certifiable and crosses just beyond") {
  SeededRng rng(105);
  int checked = 0;
  while (checked < 50) {
    CertConstants c;
    c.decoder_lipschitz = rng.uniform(0.5, 6.0);
    c.encoder_mean_lipschitz = rng.uniform(0.5, 6.0);
    c.encoder_std_lipschitz = rng.uniform(0.5, 4.0);
    c.sigma_norm = rng.uniform(0.01, 0.3);
    c.latent_dim = 2 + Index(rng.next_u64() % 20);
    c.r = rng.uniform(2.0, 12.0);
    MarginBound mb = margin_bound(c);
    if (mb.margin <= 0.0) continue;
    ++checked;
    CHECK(probability_bound(c, mb.margin).lower_bound >= 0.5 - 1e-9);
    CHECK(probability_bound(c, mb.margin + 1e-6).lower_bound < 0.5);
  }
}

TEST_CASE("fixed-scale margin on the worked value") {
  CertConstants c;
  c.decoder_lipschitz = 5.0;
  c.encoder_mean_lipschitz = 5.0;
  c.encoder_std_lipschitz = 3.0;  // ignored by the global form
  c.sigma_norm = 0.1;
  c.latent_dim = 5;
  c.r = 8.0;
  MarginBound gm = global_margin(c);
  REQUIRE(gm.m1.has_value());
  CHECK(std::abs(*gm.m1 - 0.222711) <= 1e-6);
  const long double want =
      std::sqrt(0.5L * 1.6L * 1.6L - 4.0L * 0.01L) / 5.0L;
  CHECK(std::abs(*gm.m1 - double(want)) <= 1e-15);
}

TEST_CASE("fixed-scale margin equals the pointwise margin at zero scale slope") {
  SeededRng rng(106);
  for (int rep = 0; rep < 50; ++rep) {
    CertConstants c = random_constants(rng);
    MarginBound gm = global_margin(c);
    CertConstants czero = c;
    czero.encoder_std_lipschitz = 0.0;
    MarginBound mb = margin_bound(czero);
    CHECK(std::abs(gm.margin - mb.margin) <= 1e-9);
    CHECK(gm.m1.has_value() == mb.m1.has_value());
  }
}

TEST_CASE("inputs are validated") {
  CertConstants c = fig_constants();
  CertConstants bad = c;
  bad.decoder_lipschitz = 0.0;
  CHECK_THROWS_AS((void)probability_bound(bad, 0.1), std::invalid_argument);
  bad = c;
  bad.encoder_std_lipschitz = -1.0;
  CHECK_THROWS_AS((void)probability_bound(bad, 0.1), std::invalid_argument);
  bad = c;
  bad.r = -2.0;
  CHECK_THROWS_AS((void)margin_bound(bad), std::invalid_argument);
  bad = c;
  bad.latent_dim = 0;
  CHECK_THROWS_AS((void)probability_bound(bad, 0.1), std::invalid_argument);
  CHECK_THROWS_AS((void)probability_bound(c, -0.1), std::invalid_argument);
}

TEST_CASE("branch names are distinct and stable") {
  CHECK(std::string(tail_branch_name(TailBranch::kValid)) == "valid");
  CHECK(std::string(tail_branch_name(TailBranch::kDeltaTooLarge)) ==
        "delta_too_large");
  CHECK(std::string(tail_branch_name(TailBranch::kLatentDimTooSmall)) ==
        "latent_dim_too_small");
  CHECK(std::string(tail_branch_name(TailBranch::kShapeTooSmall)) ==
        "shape_too_small");
  CHECK(std::string(tail_branch_name(TailBranch::kDeterministicLimit)) ==
        "deterministic_limit");
}
