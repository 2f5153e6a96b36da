/* C interface to the Lipschitz-VAE core: opaque handles plus status codes.
 * Every function returning lipvae_status sets a thread-local message
 * retrievable through lipvae_last_error() on failure.  Array results use a
 * size query plus a caller-provided buffer. */
#ifndef LIPVAE_H
#define LIPVAE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define LIPVAE_API __declspec(dllexport)
#else
#define LIPVAE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lipvae_status {
  LIPVAE_OK = 0,
  LIPVAE_ERR_INVALID_ARGUMENT = 1,
  LIPVAE_ERR_SHAPE = 2,
  LIPVAE_ERR_IO = 3,
  LIPVAE_ERR_FORMAT = 4,
  LIPVAE_ERR_NUMERIC = 5,
  LIPVAE_ERR_NOT_CERTIFIABLE = 6,
  LIPVAE_ERR_UNKNOWN = 7
} lipvae_status;

LIPVAE_API const char* lipvae_version(void);
/* Message for the most recent failure on this thread; empty if none. */
LIPVAE_API const char* lipvae_last_error(void);

/* ---------- datasets ---------- */

typedef struct lipvae_dataset lipvae_dataset;

LIPVAE_API lipvae_status lipvae_dataset_load_idx(const char* images_path,
                                                 const char* labels_path_or_null,
                                                 lipvae_dataset** out);
LIPVAE_API lipvae_status lipvae_dataset_synthetic(int64_t n, int64_t dim,
                                                  uint64_t seed,
                                                  int components,
                                                  lipvae_dataset** out);
LIPVAE_API lipvae_status lipvae_dataset_downsample(const lipvae_dataset* ds,
                                                   int64_t factor,
                                                   lipvae_dataset** out);
LIPVAE_API int64_t lipvae_dataset_count(const lipvae_dataset* ds);
LIPVAE_API int64_t lipvae_dataset_dim(const lipvae_dataset* ds);
LIPVAE_API int64_t lipvae_dataset_side(const lipvae_dataset* ds);
/* Copies row i into out[0..dim). */
LIPVAE_API lipvae_status lipvae_dataset_row(const lipvae_dataset* ds,
                                            int64_t i, double* out);
LIPVAE_API void lipvae_dataset_free(lipvae_dataset* ds);

/* ---------- model construction and training ---------- */

typedef struct lipvae_model_config {
  int64_t input_dim;
  int64_t latent_dim;
  const int64_t* hidden; /* hidden layer widths */
  size_t hidden_count;
  int lipschitz;             /* 0: plain ReLU nets, 1: constrained nets */
  double decoder_bound;      /* per-network Lipschitz targets */
  double encoder_mean_bound;
  double encoder_std_bound;
  int fixed_sigma;           /* 1: constant posterior scale vector */
  double fixed_sigma_norm;   /* l2 norm of that vector */
  double beta;               /* KL weight in the objective */
  int ortho_iterations;
  double ortho_tolerance;
} lipvae_model_config;

typedef struct lipvae_train_config {
  int epochs;
  int batch_size;
  double learning_rate;
  double adam_beta1;
  double adam_beta2;
  double adam_eps;
  uint64_t seed;
} lipvae_train_config;

LIPVAE_API void lipvae_model_config_default(lipvae_model_config* cfg);
LIPVAE_API void lipvae_train_config_default(lipvae_train_config* cfg);

typedef struct lipvae_model lipvae_model;

LIPVAE_API lipvae_status lipvae_model_create(const lipvae_model_config* mc,
                                             const lipvae_train_config* tc,
                                             lipvae_model** out);
/* Runs `epochs` additional training epochs. */
LIPVAE_API lipvae_status lipvae_model_train(lipvae_model* m,
                                            const lipvae_dataset* ds,
                                            int epochs);
LIPVAE_API lipvae_status lipvae_model_save(const lipvae_model* m,
                                           const char* path);
LIPVAE_API lipvae_status lipvae_model_load(const char* path,
                                           lipvae_model** out);

LIPVAE_API int64_t lipvae_model_input_dim(const lipvae_model* m);
LIPVAE_API int64_t lipvae_model_latent_dim(const lipvae_model* m);
LIPVAE_API int lipvae_model_epochs_done(const lipvae_model* m);
LIPVAE_API int lipvae_model_is_lipschitz(const lipvae_model* m);
LIPVAE_API int lipvae_model_is_fixed_sigma(const lipvae_model* m);
LIPVAE_API size_t lipvae_model_history_count(const lipvae_model* m);
LIPVAE_API lipvae_status lipvae_model_history_row(const lipvae_model* m,
                                                  size_t i, double* elbo,
                                                  double* recon_ll,
                                                  double* kl);

/* mu and sigma receive latent_dim values. */
LIPVAE_API lipvae_status lipvae_model_encode(const lipvae_model* m,
                                             const double* x, double* mu,
                                             double* sigma);
LIPVAE_API lipvae_status lipvae_model_decode(const lipvae_model* m,
                                             const double* z, double* out);
/* decode(encoder mean), the deterministic reconstruction. */
LIPVAE_API lipvae_status lipvae_model_reconstruct(const lipvae_model* m,
                                                  const double* x,
                                                  double* out);
/* Certified network constants; fails with LIPVAE_ERR_NOT_CERTIFIABLE for
 * unconstrained models.  encoder_std is 0 in fixed-sigma mode. */
LIPVAE_API lipvae_status lipvae_model_constants(const lipvae_model* m,
                                                double* decoder,
                                                double* encoder_mean,
                                                double* encoder_std);
/* l2 norm of the posterior scale at x. */
LIPVAE_API lipvae_status lipvae_model_sigma_norm(const lipvae_model* m,
                                                 const double* x, double* out);
/* Largest empirical difference ratio over random pairs.
 * net: 0 decoder, 1 encoder mean. */
LIPVAE_API lipvae_status lipvae_model_empirical_lipschitz(
    const lipvae_model* m, int net, int pairs, uint64_t seed, double* out);
LIPVAE_API void lipvae_model_free(lipvae_model* m);

/* ---------- certification formulas ---------- */

typedef struct lipvae_cert_constants {
  double decoder_lipschitz;      /* a */
  double encoder_mean_lipschitz; /* b */
  double encoder_std_lipschitz;  /* c, 0 in fixed-sigma mode */
  double sigma_norm;             /* l2 norm of the posterior scale */
  int64_t latent_dim;
  double r; /* reconstruction distance threshold */
} lipvae_cert_constants;

/* Tail branch taken by the chi-squared part of the bound. */
typedef enum lipvae_tail_branch {
  LIPVAE_TAIL_VALID = 0,
  LIPVAE_TAIL_DELTA_TOO_LARGE = 1,
  LIPVAE_TAIL_LATENT_DIM_TOO_SMALL = 2,
  LIPVAE_TAIL_SHAPE_TOO_SMALL = 3,
  LIPVAE_TAIL_DETERMINISTIC_LIMIT = 4
} lipvae_tail_branch;

LIPVAE_API const char* lipvae_tail_branch_name(int branch);

/* Lower bound 1 - min(p1, p2) on the r-robustness probability at
 * perturbation norm delta_norm.  Output pointers may be NULL. */
LIPVAE_API lipvae_status lipvae_probability_bound(
    const lipvae_cert_constants* c, double delta_norm, double* p1, double* p2,
    double* lower_bound, int* branch, int* p2_is_min);

/* Certified margin: largest perturbation norm with guaranteed probability
 * above 1/2.  m1 is NaN when the quadratic certificate has no nonnegative
 * root; m2_at_zero reports a tail bound already above 1/2 at zero. */
LIPVAE_API lipvae_status lipvae_margin_bound(const lipvae_cert_constants* c,
                                             double* m1, double* m2,
                                             double* margin, int* m2_at_zero);
/* Input-independent variant: the scale-head constant is forced to 0. */
LIPVAE_API lipvae_status lipvae_global_margin(const lipvae_cert_constants* c,
                                              double* m1, double* m2,
                                              double* margin, int* m2_at_zero);
LIPVAE_API lipvae_status lipvae_log_c_of_dz(int64_t latent_dim, double* out);

/* ---------- attacks ---------- */

typedef struct lipvae_attack_config {
  double budget;
  int steps;
  double step_size; /* <= 0 selects budget / 10 */
  int restarts;
  int samples_per_step;
  int final_samples;
  uint64_t seed;
  int clip_inputs;
} lipvae_attack_config;

LIPVAE_API void lipvae_attack_config_default(lipvae_attack_config* cfg);

typedef struct lipvae_attack_result lipvae_attack_result;

LIPVAE_API lipvae_status lipvae_attack_max_damage(
    const lipvae_model* m, const double* x, double r,
    const lipvae_attack_config* cfg, lipvae_attack_result** out);
LIPVAE_API lipvae_status lipvae_attack_latent(const lipvae_model* m,
                                              const double* x,
                                              const double* x_target,
                                              const lipvae_attack_config* cfg,
                                              lipvae_attack_result** out);

LIPVAE_API size_t lipvae_attack_result_delta_size(const lipvae_attack_result* r);
LIPVAE_API lipvae_status lipvae_attack_result_delta(
    const lipvae_attack_result* r, double* out);
LIPVAE_API double lipvae_attack_result_objective(const lipvae_attack_result* r);
LIPVAE_API double lipvae_attack_result_baseline(const lipvae_attack_result* r);
/* -1 when the attack has no probability notion (latent mode). */
LIPVAE_API double lipvae_attack_result_r_probability(
    const lipvae_attack_result* r);
LIPVAE_API double lipvae_attack_result_max_delta_norm(
    const lipvae_attack_result* r);
LIPVAE_API int lipvae_attack_result_best_restart(const lipvae_attack_result* r);
LIPVAE_API size_t lipvae_attack_result_trace_size(const lipvae_attack_result* r);
/* which: 0 raw per-step trace, 1 running best, 2 per-restart finals
 * (size restarts). */
LIPVAE_API lipvae_status lipvae_attack_result_trace(
    const lipvae_attack_result* r, int which, double* out);
LIPVAE_API size_t lipvae_attack_result_restart_count(
    const lipvae_attack_result* r);
LIPVAE_API void lipvae_attack_result_free(lipvae_attack_result* r);

/* ---------- empirical margin (radius ladder) ---------- */

typedef struct lipvae_margin_estimate lipvae_margin_estimate;

LIPVAE_API lipvae_status lipvae_estimate_margin(
    const lipvae_model* m, const double* x, double r, double max_radius,
    double alpha, int samples, int attacks, uint64_t seed,
    const lipvae_attack_config* template_or_null,
    lipvae_margin_estimate** out);

LIPVAE_API double lipvae_margin_value(const lipvae_margin_estimate* e);
LIPVAE_API int lipvae_margin_found(const lipvae_margin_estimate* e);
LIPVAE_API size_t lipvae_margin_probe_count(const lipvae_margin_estimate* e);
LIPVAE_API lipvae_status lipvae_margin_probe_radius(
    const lipvae_margin_estimate* e, size_t i, double* out);
LIPVAE_API size_t lipvae_margin_probe_prob_count(
    const lipvae_margin_estimate* e, size_t i);
LIPVAE_API lipvae_status lipvae_margin_probe_probs(
    const lipvae_margin_estimate* e, size_t i, double* out);
LIPVAE_API void lipvae_margin_estimate_free(lipvae_margin_estimate* e);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* LIPVAE_H */
