#include "certify.hpp"

#include <cmath>

namespace lipvae {

namespace {

void validate(const CertConstants& c) {
  require(std::isfinite(c.decoder_lipschitz) && c.decoder_lipschitz > 0.0,
          "certify: decoder constant must be positive");
  require(std::isfinite(c.encoder_mean_lipschitz) &&
              c.encoder_mean_lipschitz > 0.0,
          "certify: encoder mean constant must be positive");
  require(std::isfinite(c.encoder_std_lipschitz) &&
              c.encoder_std_lipschitz >= 0.0,
          "certify: encoder scale constant must be nonnegative");
  require(std::isfinite(c.sigma_norm) && c.sigma_norm >= 0.0,
          "certify: sigma norm must be nonnegative");
  require(c.latent_dim >= 1, "certify: latent dimension must be >= 1");
  require(std::isfinite(c.r) && c.r > 0.0,
          "certify: distance threshold must be positive");
}

// Tail part only; the quadratic part is inlined in probability_bound.
std::pair<double, TailBranch> tail_bound(const CertConstants& c,
                                         double delta_norm) {
  const double head = c.r / c.decoder_lipschitz -
                      c.encoder_mean_lipschitz * delta_norm;
  if (head < 0.0) return {1.0, TailBranch::kDeltaTooLarge};
  if (c.latent_dim < 2) return {1.0, TailBranch::kLatentDimTooSmall};
  const double noise =
      c.encoder_std_lipschitz * delta_norm + 2.0 * c.sigma_norm;
  if (noise == 0.0) {
    // No posterior spread: the latent displacement is deterministic.  With
    // head > 0 the tail mass vanishes; at head == 0 the shape parameter is
    // undefined and the bound stays vacuous.
    if (head > 0.0) return {0.0, TailBranch::kDeterministicLimit};
    return {1.0, TailBranch::kShapeTooSmall};
  }
  const double ratio = head / noise;
  const double u = ratio * ratio;
  const double dz = static_cast<double>(c.latent_dim);
  if (!(u > dz - 2.0)) return {1.0, TailBranch::kShapeTooSmall};
  if (std::isinf(u)) return {0.0, TailBranch::kValid};
  const double logp2 = log_c_of_dz(c.latent_dim) + 0.5 * dz * std::log(u) -
                       0.5 * u - std::log(u - dz + 2.0);
  if (logp2 >= 0.0) return {1.0, TailBranch::kValid};
  return {std::exp(logp2), TailBranch::kValid};
}

}  // namespace

double log_c_of_dz(Index dz) {
  require(dz >= 1, "certify: latent dimension must be >= 1");
  const double d = static_cast<double>(dz);
  return -0.5 * std::log(M_PI) + 0.5 * (d - (d - 1.0) * std::log(d));
}

double c_of_dz(Index dz) { return std::exp(log_c_of_dz(dz)); }

ProbabilityBound probability_bound(const CertConstants& c, double delta_norm) {
  validate(c);
  require(std::isfinite(delta_norm) && delta_norm >= 0.0,
          "certify: perturbation norm must be nonnegative");
  ProbabilityBound out;
  const double a = c.decoder_lipschitz;
  const double b = c.encoder_mean_lipschitz;
  const double spread = c.encoder_std_lipschitz * delta_norm + 2.0 * c.sigma_norm;
  const double quad =
      a * a * (b * b * delta_norm * delta_norm + spread * spread) /
      (c.r * c.r);
  out.p1 = std::min(1.0, quad);
  const auto [p2, branch] = tail_bound(c, delta_norm);
  out.p2 = p2;
  out.branch = branch;
  out.p2_is_min = out.p2 < out.p1;
  out.lower_bound = 1.0 - std::min(out.p1, out.p2);
  return out;
}

MarginBound margin_bound(const CertConstants& cst) {
  validate(cst);
  MarginBound out;
  const double a = cst.decoder_lipschitz;
  const double b = cst.encoder_mean_lipschitz;
  const double c = cst.encoder_std_lipschitz;
  const double sn = cst.sigma_norm;
  const double half_ra2 = 0.5 * (cst.r / a) * (cst.r / a);

  // Quadratic part: largest root of (c^2+b^2) t^2 + 4 c sn t + 4 sn^2 - half_ra2.
  const double qa = c * c + b * b;
  const double qc = 4.0 * sn * sn - half_ra2;
  if (c == 0.0) {
    // Fixed-scale closed form.
    if (qc < 0.0) out.m1 = std::sqrt(-qc) / b;
    else if (qc == 0.0) out.m1 = 0.0;
  } else {
    const double qb = 4.0 * c * sn;
    if (qc < 0.0) {
      // -2 qc / (qb + sqrt(disc)) avoids cancellation for small roots.
      const double disc = qb * qb - 4.0 * qa * qc;
      out.m1 = -2.0 * qc / (qb + std::sqrt(disc));
    } else if (qc == 0.0) {
      out.m1 = 0.0;
    }
    // qc > 0: both roots nonpositive, no usable radius.
  }

  // Tail part: monotone in the perturbation norm on [0, r/(a b)].
  const auto p2_at = [&](double t) { return tail_bound(cst, t).first; };
  if (p2_at(0.0) > 0.5) {
    out.m2 = 0.0;
    out.m2_at_zero = true;
  } else {
    const double t_hi = cst.r / (a * b);
    const int n = 10000;
    int last_ok = 0;
    for (int i = n; i >= 1; --i) {
      const double t = t_hi * static_cast<double>(i) / n;
      if (p2_at(t) <= 0.5) {
        last_ok = i;
        break;
      }
    }
    double lo = t_hi * static_cast<double>(last_ok) / n;
    double hi = (last_ok < n) ? t_hi * static_cast<double>(last_ok + 1) / n
                              : t_hi;
    while (hi - lo > 1e-9) {
      const double mid = 0.5 * (lo + hi);
      if (p2_at(mid) <= 0.5) lo = mid;
      else hi = mid;
    }
    out.m2 = lo;
  }

  out.margin = std::max(out.m1.value_or(0.0), out.m2);
  return out;
}

MarginBound global_margin(const CertConstants& cst) {
  CertConstants fixed = cst;
  fixed.encoder_std_lipschitz = 0.0;
  return margin_bound(fixed);
}

const char* tail_branch_name(TailBranch b) {
  switch (b) {
    case TailBranch::kValid: return "valid";
    case TailBranch::kDeltaTooLarge: return "delta_too_large";
    case TailBranch::kLatentDimTooSmall: return "latent_dim_too_small";
    case TailBranch::kShapeTooSmall: return "shape_too_small";
    case TailBranch::kDeterministicLimit: return "deterministic_limit";
  }
  return "unknown";
}

}  // namespace lipvae
