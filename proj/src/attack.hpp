#pragma once

#include "common.hpp"
#include "numerics.hpp"
#include "vae.hpp"

#include <cstdint>
#include <vector>

namespace lipvae {

struct AttackConfig {
  double budget = 1.0;   // l2 ball radius for the perturbation
  int steps = 200;
  double step_size = 0;  // <= 0 selects budget / 10
  int restarts = 5;
  int samples_per_step = 64;  // reparameterization draws per objective value
  int final_samples = 1000;   // draws for the returned estimate
  std::uint64_t seed = 0;
  bool clip_inputs = false;   // keep x + delta inside [0, 1]
};

struct AttackResult {
  Vec delta;                  // best perturbation over all restarts
  double objective = 0;       // final estimate of the objective at delta
  double baseline_objective = 0;  // same estimator at delta = 0
  double r_probability = -1;  // reconstruction-distance probability, max
                              // damage only; -1 otherwise
  std::vector<double> trace;       // per-step objective, winning restart
  std::vector<double> best_trace;  // running best of trace (monotone)
  std::vector<double> restart_objectives;  // final estimate per restart
  double max_delta_norm = 0;  // largest post-projection iterate norm
  int best_restart = 0;
};

// v when inside the ball, else scaled onto the sphere.
Vec project_l2_ball(const Vec& v, double budget);

// Projected gradient ascent on the sampled mean of
// || decode(z from q(.|x+delta)) - decode(z from q(.|x)) ||_2, with fresh
// draws every step.  Gradients reach delta through the encoder and decoder;
// weights stay fixed.  A non-finite objective aborts its restart only.
AttackResult max_damage_attack(const VaeModel& model, const Vec& x, double r,
                               const AttackConfig& cfg);

// Projected gradient descent on the closed-form diagonal-Gaussian KL between
// the perturbed posterior q(.|x_orig+delta) and the target posterior
// q(.|x_target).  Deterministic objective.
AttackResult latent_space_attack(const VaeModel& model, const Vec& x_orig,
                                 const Vec& x_target, const AttackConfig& cfg);

struct PairStats {
  double mean_distance = 0;
  double prob_within_r = 0;
};

// Draws `samples` independent posterior pairs at x+delta and x and measures
// reconstruction distances.
PairStats sample_pair_stats(const VaeModel& model, const Vec& x,
                            const Vec& delta, double r, int samples,
                            SeededRng& rng);

// Fraction of sampled reconstruction-distance pairs within r.
double estimate_r_prob(const VaeModel& model, const Vec& x, const Vec& delta,
                       double r, int samples, SeededRng& rng);

struct MarginProbe {
  double radius = 0;
  std::vector<double> probabilities;  // one per attempted attack, possibly
                                      // cut short at the first failure
};

struct MarginEstimate {
  double margin = 0;
  bool found = false;  // false: ladder exhausted without a passing radius
  std::vector<MarginProbe> probes;
};

// Radius ladder max_radius, max_radius - alpha, ...: at each rung run
// `attacks` independent single-restart maximum damage attacks with budget
// equal to the rung and return the first rung where every estimated
// probability exceeds 1/2.
MarginEstimate estimate_margin(const VaeModel& model, const Vec& x, double r,
                               double max_radius, double alpha, int samples,
                               int attacks, std::uint64_t seed,
                               const AttackConfig& attack_template = {});

}  // namespace lipvae
