#include "cont_bernoulli.hpp"

#include <algorithm>
#include <cmath>

namespace lipvae {

double cb_clamp_lambda(double lambda) {
  return std::min(1.0 - kCbLambdaMin, std::max(kCbLambdaMin, lambda));
}

double cb_log_normalizer(double lambda) {
  const double lc = cb_clamp_lambda(lambda);
  const double t = 1.0 - 2.0 * lc;
  const double t2 = t * t;
  if (std::fabs(t) < kCbTaylorSwitch) {
    // atanh(t)/t = 1 + t^2/3 + t^4/5 + ...; log of that expands as below.
    return std::log(2.0) + t2 / 3.0 + 13.0 / 90.0 * t2 * t2;
  }
  return std::log(2.0) + std::log(std::atanh(t) / t);
}

double cb_log_normalizer_dlambda(double lambda) {
  if (lambda < kCbLambdaMin || lambda > 1.0 - kCbLambdaMin) return 0.0;
  const double t = 1.0 - 2.0 * lambda;
  if (std::fabs(t) < kCbTaylorSwitch) {
    const double dlog_dt = 2.0 / 3.0 * t + 26.0 / 45.0 * t * t * t;
    return -2.0 * dlog_dt;
  }
  const double dlog_dt = 1.0 / ((1.0 - t * t) * std::atanh(t)) - 1.0 / t;
  return -2.0 * dlog_dt;
}

double cb_log_density(double x, double lambda) {
  const double lc = cb_clamp_lambda(lambda);
  return cb_log_normalizer(lc) + x * std::log(lc) +
         (1.0 - x) * std::log(1.0 - lc);
}

double cb_log_density_dlambda(double x, double lambda) {
  if (lambda < kCbLambdaMin || lambda > 1.0 - kCbLambdaMin) return 0.0;
  return cb_log_normalizer_dlambda(lambda) + x / lambda -
         (1.0 - x) / (1.0 - lambda);
}

}  // namespace lipvae
