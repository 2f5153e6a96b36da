#pragma once

#include "common.hpp"

#include <optional>

namespace lipvae {

// Constants of a trained model entering the robustness calculator.
struct CertConstants {
  double decoder_lipschitz = 1.0;       // a
  double encoder_mean_lipschitz = 1.0;  // b
  double encoder_std_lipschitz = 0.0;   // c; 0 when the posterior scale is fixed
  double sigma_norm = 0.0;              // l2 norm of the posterior scale at x
  Index latent_dim = 1;
  double r = 1.0;  // reconstruction distance threshold
};

enum class TailBranch {
  kValid,              // tail expression evaluated, clamped to [0, 1]
  kDeltaTooLarge,      // r/a - b * delta < 0
  kLatentDimTooSmall,  // latent dimension < 2
  kShapeTooSmall,      // u <= d_z - 2
  kDeterministicLimit  // zero noise denominator; tail mass vanishes
};

struct ProbabilityBound {
  double p1 = 1.0;
  double p2 = 1.0;
  double lower_bound = 0.0;  // 1 - min(p1, p2)
  TailBranch branch = TailBranch::kValid;
  bool p2_is_min = false;
};

struct MarginBound {
  std::optional<double> m1;  // largest nonnegative quadratic root, if any
  double m2 = 0.0;           // largest perturbation with tail bound <= 1/2
  double margin = 0.0;       // max of the available parts
  bool m2_at_zero = false;   // tail bound already above 1/2 at delta = 0
};

// log of the tail constant; finite for any latent dimension >= 1 even where
// the direct value underflows to zero.
double log_c_of_dz(Index dz);
double c_of_dz(Index dz);

// Lower bound on P(reconstruction moves less than r) under a perturbation of
// the given norm.  The tail part is evaluated in log space.
ProbabilityBound probability_bound(const CertConstants& c, double delta_norm);

// Certified pointwise margin: largest perturbation norm with bound >= 1/2.
// m2 uses a 10^4-point scan plus bisection to 1e-9 on [0, r/(a b)].
MarginBound margin_bound(const CertConstants& c);

// Fixed-scale global form; identical to margin_bound with c := 0.
MarginBound global_margin(const CertConstants& c);

const char* tail_branch_name(TailBranch b);

}  // namespace lipvae
