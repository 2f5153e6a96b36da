#pragma once

namespace lipvae {

// Continuous Bernoulli on [0, 1] with parameter lambda in (0, 1):
//   p(x | lambda) = C(lambda) * lambda^x * (1 - lambda)^(1 - x)
//   C(lambda)     = 2 * atanh(1 - 2 lambda) / (1 - 2 lambda),  C(1/2) = 2.
// Parameters are clamped to [kCbLambdaMin, 1 - kCbLambdaMin] before use so the
// log terms stay finite.
inline constexpr double kCbLambdaMin = 1e-6;
// Below this |1 - 2 lambda| the closed form is 0/0; switch to the series.
inline constexpr double kCbTaylorSwitch = 1e-3;

double cb_clamp_lambda(double lambda);

// log C(lambda); series branch: log 2 + t^2/3 + 13 t^4/90, t = 1 - 2 lambda.
double cb_log_normalizer(double lambda);
// d/d lambda of log C(lambda) (zero outside the clamp interval).
double cb_log_normalizer_dlambda(double lambda);

// log p(x | lambda) for a single coordinate, x in [0, 1].
double cb_log_density(double x, double lambda);
// d/d lambda of log p(x | lambda) (zero outside the clamp interval).
double cb_log_density_dlambda(double x, double lambda);

}  // namespace lipvae
