#include "attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tape.hpp"

namespace lipvae {
namespace {

constexpr std::uint64_t kFinalStream = 0xF1;
constexpr std::uint64_t kBaselineStream = 0xB0;

Vec clip_delta_to_box(const Vec& x, Vec delta) {
  for (Index i = 0; i < delta.size(); ++i) {
    delta[i] = std::min(1.0 - x[i], std::max(-x[i], delta[i]));
  }
  return delta;
}

Vec initial_delta(SeededRng& rng, Index d, double budget) {
  if (budget <= 0) return Vec::Zero(d);
  Vec v = rng.normal_vec(d);
  const double n = l2_norm(v);
  if (n == 0) return Vec::Zero(d);
  return v * (0.5 * budget / n);
}

void check_iterate(const Vec& delta, double budget, double& max_norm) {
  const double n = l2_norm(delta);
  if (n > budget * (1.0 + 1e-12) + 1e-15) {
    throw numeric_error("attack iterate escaped the perturbation ball");
  }
  max_norm = std::max(max_norm, n);
}

void validate_attack_inputs(const VaeModel& model, const Vec& x,
                            const AttackConfig& cfg) {
  require(model.frozen(), "attacks need a frozen model");
  require_shape(x.size() == model.config().input_dim,
                "input size does not match the model");
  require(cfg.budget >= 0 && std::isfinite(cfg.budget),
          "attack budget must be nonnegative");
  require(cfg.steps >= 1, "attack needs at least one step");
  require(cfg.restarts >= 1, "attack needs at least one restart");
  require(cfg.samples_per_step >= 1 && cfg.final_samples >= 1,
          "attack sample counts must be positive");
}

std::vector<double> running_best(const std::vector<double>& trace,
                                 bool maximize) {
  std::vector<double> out;
  out.reserve(trace.size());
  double best = maximize ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();
  for (double v : trace) {
    best = maximize ? std::max(best, v) : std::min(best, v);
    out.push_back(best);
  }
  return out;
}

// z = mu + eps .* sigma, rows of eps against a single posterior.
Mat reparam_rows(const Vec& mu, const Vec& sigma, const Mat& eps) {
  Mat z = eps;
  z.array().rowwise() *= sigma.transpose().array();
  z.array().rowwise() += mu.transpose().array();
  return z;
}

}  // namespace

Vec project_l2_ball(const Vec& v, double budget) {
  require(budget >= 0, "projection radius must be nonnegative");
  if (budget == 0) return Vec::Zero(v.size());
  const double n = l2_norm(v);
  if (n <= budget) return v;
  return v * (budget / n);
}

PairStats sample_pair_stats(const VaeModel& model, const Vec& x,
                            const Vec& delta, double r, int samples,
                            SeededRng& rng) {
  require(model.frozen(), "sampling needs a frozen model");
  require(samples >= 1, "sample count must be positive");
  require_shape(x.size() == model.config().input_dim &&
                    delta.size() == x.size(),
                "input size does not match the model");
  const Index dz = model.config().latent_dim;
  const EncoderOutput ep = model.encode(x + delta);
  const EncoderOutput e0 = model.encode(x);
  const Mat eps1 = rng.normal_mat(samples, dz);
  const Mat eps2 = rng.normal_mat(samples, dz);
  const Mat lam1 = model.decode_batch(reparam_rows(ep.mu, ep.sigma, eps1));
  const Mat lam2 = model.decode_batch(reparam_rows(e0.mu, e0.sigma, eps2));
  const Vec dist = row_l2_norms(lam1 - lam2);
  PairStats st;
  st.mean_distance =
      sum_pairwise(dist.data(), static_cast<std::size_t>(dist.size())) /
      double(samples);
  Index within = 0;
  for (Index i = 0; i < dist.size(); ++i) {
    if (dist[i] <= r) ++within;
  }
  st.prob_within_r = double(within) / double(samples);
  return st;
}

double estimate_r_prob(const VaeModel& model, const Vec& x, const Vec& delta,
                       double r, int samples, SeededRng& rng) {
  return sample_pair_stats(model, x, delta, r, samples, rng).prob_within_r;
}

AttackResult max_damage_attack(const VaeModel& model, const Vec& x, double r,
                               const AttackConfig& cfg) {
  validate_attack_inputs(model, x, cfg);
  require(r >= 0 && std::isfinite(r), "distance threshold must be >= 0");

  const Index d = x.size();
  const Index dz = model.config().latent_dim;
  const double step = cfg.step_size > 0 ? cfg.step_size : cfg.budget / 10.0;
  SeededRng root(cfg.seed);

  AttackResult result;
  double best_final = -std::numeric_limits<double>::infinity();

  for (int t = 0; t < cfg.restarts; ++t) {
    SeededRng rng = root.substream(static_cast<std::uint64_t>(t));
    Vec delta = initial_delta(rng, d, cfg.budget);
    if (cfg.clip_inputs) delta = clip_delta_to_box(x, delta);
    check_iterate(delta, cfg.budget, result.max_delta_norm);

    double best_raw = -std::numeric_limits<double>::infinity();
    Vec best_delta = delta;
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(cfg.steps));

    for (int s = 0; s < cfg.steps; ++s) {
      const Mat eps1 = rng.normal_mat(cfg.samples_per_step, dz);
      const Mat eps2 = rng.normal_mat(cfg.samples_per_step, dz);
      const EncoderOutput e0 = model.encode(x);
      const Mat recon_base =
          model.decode_batch(reparam_rows(e0.mu, e0.sigma, eps2));

      Tape tp;
      const Tape::Id did = tp.input(delta.transpose(), true);
      const Tape::Id xp = tp.add(did, tp.constant_row(x));
      const auto enc = model.encode_frozen_tape(tp, xp);
      const Tape::Id z1 =
          tp.add_row(tp.mul_row(tp.constant(eps1), enc.sigma), enc.mu);
      const Tape::Id lam1 = model.decode_frozen_tape(tp, z1);
      const Tape::Id diff = tp.sub(lam1, tp.constant(recon_base));
      const Tape::Id obj = tp.mean_all(tp.row_l2_norms(diff));

      const double raw = tp.value(obj)(0, 0);
      if (!std::isfinite(raw)) break;  // abort this restart only
      trace.push_back(raw);
      if (raw > best_raw) {
        best_raw = raw;
        best_delta = delta;
      }

      tp.backward(obj);
      const Vec g = tp.grad(did).row(0).transpose();
      const double gn = l2_norm(g);
      if (gn > 0) {
        delta = project_l2_ball(delta + (step / gn) * g, cfg.budget);
        if (cfg.clip_inputs) delta = clip_delta_to_box(x, delta);
      }
      check_iterate(delta, cfg.budget, result.max_delta_norm);
    }

    SeededRng fr = rng.substream(kFinalStream);
    const PairStats st =
        sample_pair_stats(model, x, best_delta, r, cfg.final_samples, fr);
    result.restart_objectives.push_back(st.mean_distance);
    if (st.mean_distance > best_final) {
      best_final = st.mean_distance;
      result.delta = best_delta;
      result.objective = st.mean_distance;
      result.r_probability = st.prob_within_r;
      result.trace = trace;
      result.best_restart = t;
    }
  }
  result.best_trace = running_best(result.trace, true);

  SeededRng br = root.substream(kBaselineStream);
  result.baseline_objective =
      sample_pair_stats(model, x, Vec::Zero(d), r, cfg.final_samples, br)
          .mean_distance;
  return result;
}

AttackResult latent_space_attack(const VaeModel& model, const Vec& x_orig,
                                 const Vec& x_target,
                                 const AttackConfig& cfg) {
  validate_attack_inputs(model, x_orig, cfg);
  require_shape(x_target.size() == x_orig.size(),
                "target input size does not match the model");

  const Index d = x_orig.size();
  const double step = cfg.step_size > 0 ? cfg.step_size : cfg.budget / 10.0;
  SeededRng root(cfg.seed);
  const EncoderOutput et = model.encode(x_target);

  const auto kl_at = [&](const Vec& delta) {
    const EncoderOutput ep = model.encode(x_orig + delta);
    return kl_diag_gaussians(ep.mu, ep.sigma, et.mu, et.sigma);
  };

  AttackResult result;
  double best_final = std::numeric_limits<double>::infinity();

  for (int t = 0; t < cfg.restarts; ++t) {
    SeededRng rng = root.substream(static_cast<std::uint64_t>(t));
    Vec delta = initial_delta(rng, d, cfg.budget);
    if (cfg.clip_inputs) delta = clip_delta_to_box(x_orig, delta);
    check_iterate(delta, cfg.budget, result.max_delta_norm);

    double best_raw = std::numeric_limits<double>::infinity();
    Vec best_delta = delta;
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(cfg.steps));

    for (int s = 0; s < cfg.steps; ++s) {
      Tape tp;
      const Tape::Id did = tp.input(delta.transpose(), true);
      const Tape::Id xp = tp.add(did, tp.constant_row(x_orig));
      const auto enc = model.encode_frozen_tape(tp, xp);
      const Tape::Id obj = tp.mean_all(tp.kl_diag_gaussian_rows(
          enc.mu, enc.sigma, tp.constant_row(et.mu),
          tp.constant_row(et.sigma)));

      const double raw = tp.value(obj)(0, 0);
      if (!std::isfinite(raw)) break;
      trace.push_back(raw);
      if (raw < best_raw) {
        best_raw = raw;
        best_delta = delta;
      }

      tp.backward(obj);
      const Vec g = tp.grad(did).row(0).transpose();
      const double gn = l2_norm(g);
      if (gn > 0) {
        delta = project_l2_ball(delta - (step / gn) * g, cfg.budget);
        if (cfg.clip_inputs) delta = clip_delta_to_box(x_orig, delta);
      }
      check_iterate(delta, cfg.budget, result.max_delta_norm);
    }

    const double final_kl = kl_at(best_delta);
    result.restart_objectives.push_back(final_kl);
    if (final_kl < best_final) {
      best_final = final_kl;
      result.delta = best_delta;
      result.objective = final_kl;
      result.trace = trace;
      result.best_restart = t;
    }
  }
  result.best_trace = running_best(result.trace, false);
  result.baseline_objective = kl_at(Vec::Zero(d));
  return result;
}

MarginEstimate estimate_margin(const VaeModel& model, const Vec& x, double r,
                               double max_radius, double alpha, int samples,
                               int attacks, std::uint64_t seed,
                               const AttackConfig& attack_template) {
  require(model.frozen(), "margin estimation needs a frozen model");
  require(max_radius > 0 && std::isfinite(max_radius),
          "ladder must start at a positive radius");
  require(alpha > 0, "ladder decrement must be positive");
  require(samples >= 1, "sample count must be positive");
  require(attacks >= 1, "attack count must be positive");
  require(r >= 0 && std::isfinite(r), "distance threshold must be >= 0");

  SeededRng root(seed);
  MarginEstimate est;
  for (int k = 0;; ++k) {
    const double radius = max_radius - double(k) * alpha;
    if (!(radius > 1e-12)) break;
    SeededRng rung = root.substream(static_cast<std::uint64_t>(k));

    MarginProbe probe;
    probe.radius = radius;
    bool all_pass = true;
    for (int t = 0; t < attacks; ++t) {
      AttackConfig ac = attack_template;
      ac.budget = radius;
      ac.restarts = 1;
      ac.final_samples = samples;
      ac.seed = rung.next_u64();
      const AttackResult res = max_damage_attack(model, x, r, ac);
      probe.probabilities.push_back(res.r_probability);
      if (!(res.r_probability > 0.5)) {
        all_pass = false;
        break;  // one failed attack already disqualifies the rung
      }
    }
    est.probes.push_back(probe);
    if (all_pass) {
      est.margin = radius;
      est.found = true;
      return est;
    }
  }
  est.margin = 0;
  est.found = false;
  return est;
}

}  // namespace lipvae
