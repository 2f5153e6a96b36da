#include "lipvae/lipvae.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "attack.hpp"
#include "certify.hpp"
#include "checkpoint.hpp"
#include "common.hpp"
#include "dataset.hpp"
#include "lipnet.hpp"
#include "trainer.hpp"
#include "vae.hpp"

struct lipvae_dataset {
  lipvae::Dataset ds;
};
struct lipvae_model {
  lipvae::TrainedVae t;
};
struct lipvae_attack_result {
  lipvae::AttackResult r;
};
struct lipvae_margin_estimate {
  lipvae::MarginEstimate e;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

template <typename F>
lipvae_status wrap(F&& f) noexcept {
  try {
    f();
    g_last_error.clear();
    return LIPVAE_OK;
  } catch (const lipvae::shape_error& e) {
    set_error(e.what());
    return LIPVAE_ERR_SHAPE;
  } catch (const lipvae::io_error& e) {
    set_error(e.what());
    return LIPVAE_ERR_IO;
  } catch (const lipvae::format_error& e) {
    set_error(e.what());
    return LIPVAE_ERR_FORMAT;
  } catch (const lipvae::not_certifiable_error& e) {
    set_error(e.what());
    return LIPVAE_ERR_NOT_CERTIFIABLE;
  } catch (const lipvae::numeric_error& e) {
    set_error(e.what());
    return LIPVAE_ERR_NUMERIC;
  } catch (const std::invalid_argument& e) {
    set_error(e.what());
    return LIPVAE_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    set_error("out of memory");
    return LIPVAE_ERR_UNKNOWN;
  } catch (const std::exception& e) {
    set_error(e.what());
    return LIPVAE_ERR_UNKNOWN;
  } catch (...) {
    set_error("unknown failure");
    return LIPVAE_ERR_UNKNOWN;
  }
}

void require_c(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

lipvae::VaeConfig to_vae_config(const lipvae_model_config& mc) {
  lipvae::VaeConfig cfg;
  cfg.input_dim = mc.input_dim;
  cfg.latent_dim = mc.latent_dim;
  cfg.hidden.clear();
  require_c(mc.hidden != nullptr || mc.hidden_count == 0,
            "hidden widths pointer is null");
  for (size_t i = 0; i < mc.hidden_count; ++i) {
    cfg.hidden.push_back(static_cast<lipvae::Index>(mc.hidden[i]));
  }
  cfg.lipschitz = mc.lipschitz != 0;
  cfg.decoder_bound = mc.decoder_bound;
  cfg.encoder_mean_bound = mc.encoder_mean_bound;
  cfg.encoder_std_bound = mc.encoder_std_bound;
  cfg.fixed_sigma = mc.fixed_sigma != 0;
  if (cfg.fixed_sigma) {
    require_c(mc.fixed_sigma_norm >= 0, "fixed sigma norm must be >= 0");
    const double per =
        mc.fixed_sigma_norm / std::sqrt(double(std::max<int64_t>(
                                  1, mc.latent_dim)));
    cfg.sigma = lipvae::Vec::Constant(cfg.latent_dim, per);
  }
  cfg.beta = mc.beta;
  cfg.ortho.iterations = mc.ortho_iterations;
  cfg.ortho.tolerance = mc.ortho_tolerance;
  return cfg;
}

lipvae::TrainConfig to_train_config(const lipvae_train_config& tc) {
  lipvae::TrainConfig cfg;
  cfg.epochs = tc.epochs;
  cfg.batch_size = tc.batch_size;
  cfg.learning_rate = tc.learning_rate;
  cfg.adam_beta1 = tc.adam_beta1;
  cfg.adam_beta2 = tc.adam_beta2;
  cfg.adam_eps = tc.adam_eps;
  cfg.seed = tc.seed;
  return cfg;
}

lipvae::AttackConfig to_attack_config(const lipvae_attack_config& ac) {
  lipvae::AttackConfig cfg;
  cfg.budget = ac.budget;
  cfg.steps = ac.steps;
  cfg.step_size = ac.step_size;
  cfg.restarts = ac.restarts;
  cfg.samples_per_step = ac.samples_per_step;
  cfg.final_samples = ac.final_samples;
  cfg.seed = ac.seed;
  cfg.clip_inputs = ac.clip_inputs != 0;
  return cfg;
}

lipvae::CertConstants to_cert_constants(const lipvae_cert_constants& c) {
  lipvae::CertConstants out;
  out.decoder_lipschitz = c.decoder_lipschitz;
  out.encoder_mean_lipschitz = c.encoder_mean_lipschitz;
  out.encoder_std_lipschitz = c.encoder_std_lipschitz;
  out.sigma_norm = c.sigma_norm;
  out.latent_dim = static_cast<lipvae::Index>(c.latent_dim);
  out.r = c.r;
  return out;
}

lipvae::Vec to_vec(const double* p, lipvae::Index n) {
  require_c(p != nullptr, "input array pointer is null");
  lipvae::Vec v(n);
  std::memcpy(v.data(), p, sizeof(double) * static_cast<size_t>(n));
  return v;
}

void fill_margin_outputs(const lipvae::MarginBound& mb, double* m1, double* m2,
                         double* margin, int* m2_at_zero) {
  if (m1 != nullptr) {
    *m1 = mb.m1 ? *mb.m1 : std::numeric_limits<double>::quiet_NaN();
  }
  if (m2 != nullptr) *m2 = mb.m2;
  if (margin != nullptr) *margin = mb.margin;
  if (m2_at_zero != nullptr) *m2_at_zero = mb.m2_at_zero ? 1 : 0;
}

}  // namespace

extern "C" {

const char* lipvae_version(void) { return "0.1.0"; }

const char* lipvae_last_error(void) { return g_last_error.c_str(); }

/* ---------- datasets ---------- */

lipvae_status lipvae_dataset_load_idx(const char* images_path,
                                      const char* labels_path_or_null,
                                      lipvae_dataset** out) {
  return wrap([&] {
    require_c(images_path != nullptr && out != nullptr,
              "null pointer argument");
    auto* h = new lipvae_dataset;
    try {
      h->ds = lipvae::load_mnist_idx(
          images_path, labels_path_or_null ? labels_path_or_null : "");
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

lipvae_status lipvae_dataset_synthetic(int64_t n, int64_t dim, uint64_t seed,
                                       int components, lipvae_dataset** out) {
  return wrap([&] {
    require_c(out != nullptr, "null pointer argument");
    auto* h = new lipvae_dataset;
    try {
      h->ds = lipvae::synthetic_blobs(static_cast<lipvae::Index>(n),
                                      static_cast<lipvae::Index>(dim), seed,
                                      components);
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

lipvae_status lipvae_dataset_downsample(const lipvae_dataset* ds,
                                        int64_t factor, lipvae_dataset** out) {
  return wrap([&] {
    require_c(ds != nullptr && out != nullptr, "null pointer argument");
    auto* h = new lipvae_dataset;
    try {
      h->ds = lipvae::downsample(ds->ds, static_cast<lipvae::Index>(factor));
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

int64_t lipvae_dataset_count(const lipvae_dataset* ds) {
  return ds ? ds->ds.count() : 0;
}

int64_t lipvae_dataset_dim(const lipvae_dataset* ds) {
  return ds ? ds->ds.dim() : 0;
}

int64_t lipvae_dataset_side(const lipvae_dataset* ds) {
  return ds ? ds->ds.side : 0;
}

lipvae_status lipvae_dataset_row(const lipvae_dataset* ds, int64_t i,
                                 double* out) {
  return wrap([&] {
    require_c(ds != nullptr && out != nullptr, "null pointer argument");
    require_c(i >= 0 && i < ds->ds.count(), "row index out of range");
    for (lipvae::Index j = 0; j < ds->ds.dim(); ++j) {
      out[j] = ds->ds.images(static_cast<lipvae::Index>(i), j);
    }
  });
}

void lipvae_dataset_free(lipvae_dataset* ds) { delete ds; }

/* ---------- model ---------- */

void lipvae_model_config_default(lipvae_model_config* cfg) {
  if (cfg == nullptr) return;
  std::memset(cfg, 0, sizeof(*cfg));
  cfg->input_dim = 784;
  cfg->latent_dim = 10;
  cfg->hidden = nullptr;  /* empty means the library default widths */
  cfg->hidden_count = 0;
  cfg->lipschitz = 1;
  cfg->decoder_bound = 1.0;
  cfg->encoder_mean_bound = 1.0;
  cfg->encoder_std_bound = 1.0;
  cfg->fixed_sigma = 0;
  cfg->fixed_sigma_norm = 0.0;
  cfg->beta = 1.0;
  cfg->ortho_iterations = 20;
  cfg->ortho_tolerance = 1e-6;
}

void lipvae_train_config_default(lipvae_train_config* cfg) {
  if (cfg == nullptr) return;
  std::memset(cfg, 0, sizeof(*cfg));
  cfg->epochs = 20;
  cfg->batch_size = 128;
  cfg->learning_rate = 1e-3;
  cfg->adam_beta1 = 0.9;
  cfg->adam_beta2 = 0.999;
  cfg->adam_eps = 1e-8;
  cfg->seed = 1;
}

lipvae_status lipvae_model_create(const lipvae_model_config* mc,
                                  const lipvae_train_config* tc,
                                  lipvae_model** out) {
  return wrap([&] {
    require_c(mc != nullptr && tc != nullptr && out != nullptr,
              "null pointer argument");
    lipvae::VaeConfig vc = to_vae_config(*mc);
    if (vc.hidden.empty()) vc.hidden = {512, 512, 512};
    auto* h = new lipvae_model;
    try {
      h->t = lipvae::make_untrained(vc, to_train_config(*tc));
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

lipvae_status lipvae_model_train(lipvae_model* m, const lipvae_dataset* ds,
                                 int epochs) {
  return wrap([&] {
    require_c(m != nullptr && ds != nullptr, "null pointer argument");
    lipvae::train(m->t, ds->ds, epochs);
  });
}

lipvae_status lipvae_model_save(const lipvae_model* m, const char* path) {
  return wrap([&] {
    require_c(m != nullptr && path != nullptr, "null pointer argument");
    lipvae::save_checkpoint(m->t, path);
  });
}

lipvae_status lipvae_model_load(const char* path, lipvae_model** out) {
  return wrap([&] {
    require_c(path != nullptr && out != nullptr, "null pointer argument");
    auto* h = new lipvae_model;
    try {
      h->t = lipvae::load_checkpoint(path);
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

int64_t lipvae_model_input_dim(const lipvae_model* m) {
  return m ? m->t.model.config().input_dim : 0;
}

int64_t lipvae_model_latent_dim(const lipvae_model* m) {
  return m ? m->t.model.config().latent_dim : 0;
}

int lipvae_model_epochs_done(const lipvae_model* m) {
  return m ? m->t.epochs_done : 0;
}

int lipvae_model_is_lipschitz(const lipvae_model* m) {
  return (m && m->t.model.config().lipschitz) ? 1 : 0;
}

int lipvae_model_is_fixed_sigma(const lipvae_model* m) {
  return (m && m->t.model.config().fixed_sigma) ? 1 : 0;
}

size_t lipvae_model_history_count(const lipvae_model* m) {
  return m ? m->t.history.size() : 0;
}

lipvae_status lipvae_model_history_row(const lipvae_model* m, size_t i,
                                       double* elbo, double* recon_ll,
                                       double* kl) {
  return wrap([&] {
    require_c(m != nullptr, "null pointer argument");
    require_c(i < m->t.history.size(), "history index out of range");
    const auto& row = m->t.history[i];
    if (elbo != nullptr) *elbo = row.elbo;
    if (recon_ll != nullptr) *recon_ll = row.recon_ll;
    if (kl != nullptr) *kl = row.kl;
  });
}

lipvae_status lipvae_model_encode(const lipvae_model* m, const double* x,
                                  double* mu, double* sigma) {
  return wrap([&] {
    require_c(m != nullptr && x != nullptr, "null pointer argument");
    const auto enc =
        m->t.model.encode(to_vec(x, m->t.model.config().input_dim));
    const lipvae::Index dz = m->t.model.config().latent_dim;
    if (mu != nullptr) std::memcpy(mu, enc.mu.data(), sizeof(double) * dz);
    if (sigma != nullptr) {
      std::memcpy(sigma, enc.sigma.data(), sizeof(double) * dz);
    }
  });
}

lipvae_status lipvae_model_decode(const lipvae_model* m, const double* z,
                                  double* out) {
  return wrap([&] {
    require_c(m != nullptr && z != nullptr && out != nullptr,
              "null pointer argument");
    const lipvae::Vec y =
        m->t.model.decode(to_vec(z, m->t.model.config().latent_dim));
    std::memcpy(out, y.data(), sizeof(double) * size_t(y.size()));
  });
}

lipvae_status lipvae_model_reconstruct(const lipvae_model* m, const double* x,
                                       double* out) {
  return wrap([&] {
    require_c(m != nullptr && x != nullptr && out != nullptr,
              "null pointer argument");
    const lipvae::Vec y =
        m->t.model.reconstruct(to_vec(x, m->t.model.config().input_dim));
    std::memcpy(out, y.data(), sizeof(double) * size_t(y.size()));
  });
}

lipvae_status lipvae_model_constants(const lipvae_model* m, double* decoder,
                                     double* encoder_mean,
                                     double* encoder_std) {
  return wrap([&] {
    require_c(m != nullptr, "null pointer argument");
    const double a = m->t.model.decoder_constant();
    const double b = m->t.model.encoder_mean_constant();
    const double c = m->t.model.encoder_std_constant();
    if (decoder != nullptr) *decoder = a;
    if (encoder_mean != nullptr) *encoder_mean = b;
    if (encoder_std != nullptr) *encoder_std = c;
  });
}

lipvae_status lipvae_model_sigma_norm(const lipvae_model* m, const double* x,
                                      double* out) {
  return wrap([&] {
    require_c(m != nullptr && x != nullptr && out != nullptr,
              "null pointer argument");
    const auto enc =
        m->t.model.encode(to_vec(x, m->t.model.config().input_dim));
    *out = lipvae::l2_norm(enc.sigma);
  });
}

lipvae_status lipvae_model_empirical_lipschitz(const lipvae_model* m, int net,
                                               int pairs, uint64_t seed,
                                               double* out) {
  return wrap([&] {
    require_c(m != nullptr && out != nullptr, "null pointer argument");
    require_c(net == 0 || net == 1, "net selector must be 0 or 1");
    lipvae::SeededRng rng(seed);
    const lipvae::Mlp& n =
        net == 0 ? m->t.model.decoder() : m->t.model.encoder_mean();
    *out = lipvae::empirical_lipschitz(n, pairs, rng);
  });
}

void lipvae_model_free(lipvae_model* m) { delete m; }

/* ---------- certification ---------- */

const char* lipvae_tail_branch_name(int branch) {
  switch (branch) {
    case LIPVAE_TAIL_VALID:
      return lipvae::tail_branch_name(lipvae::TailBranch::kValid);
    case LIPVAE_TAIL_DELTA_TOO_LARGE:
      return lipvae::tail_branch_name(lipvae::TailBranch::kDeltaTooLarge);
    case LIPVAE_TAIL_LATENT_DIM_TOO_SMALL:
      return lipvae::tail_branch_name(lipvae::TailBranch::kLatentDimTooSmall);
    case LIPVAE_TAIL_SHAPE_TOO_SMALL:
      return lipvae::tail_branch_name(lipvae::TailBranch::kShapeTooSmall);
    case LIPVAE_TAIL_DETERMINISTIC_LIMIT:
      return lipvae::tail_branch_name(lipvae::TailBranch::kDeterministicLimit);
    default:
      return "unknown";
  }
}

lipvae_status lipvae_probability_bound(const lipvae_cert_constants* c,
                                       double delta_norm, double* p1,
                                       double* p2, double* lower_bound,
                                       int* branch, int* p2_is_min) {
  return wrap([&] {
    require_c(c != nullptr, "null pointer argument");
    const auto pb =
        lipvae::probability_bound(to_cert_constants(*c), delta_norm);
    if (p1 != nullptr) *p1 = pb.p1;
    if (p2 != nullptr) *p2 = pb.p2;
    if (lower_bound != nullptr) *lower_bound = pb.lower_bound;
    if (branch != nullptr) *branch = static_cast<int>(pb.branch);
    if (p2_is_min != nullptr) *p2_is_min = pb.p2_is_min ? 1 : 0;
  });
}

lipvae_status lipvae_margin_bound(const lipvae_cert_constants* c, double* m1,
                                  double* m2, double* margin,
                                  int* m2_at_zero) {
  return wrap([&] {
    require_c(c != nullptr, "null pointer argument");
    fill_margin_outputs(lipvae::margin_bound(to_cert_constants(*c)), m1, m2,
                        margin, m2_at_zero);
  });
}

lipvae_status lipvae_global_margin(const lipvae_cert_constants* c, double* m1,
                                   double* m2, double* margin,
                                   int* m2_at_zero) {
  return wrap([&] {
    require_c(c != nullptr, "null pointer argument");
    fill_margin_outputs(lipvae::global_margin(to_cert_constants(*c)), m1, m2,
                        margin, m2_at_zero);
  });
}

lipvae_status lipvae_log_c_of_dz(int64_t latent_dim, double* out) {
  return wrap([&] {
    require_c(out != nullptr, "null pointer argument");
    *out = lipvae::log_c_of_dz(static_cast<lipvae::Index>(latent_dim));
  });
}

/* ---------- attacks ---------- */

void lipvae_attack_config_default(lipvae_attack_config* cfg) {
  if (cfg == nullptr) return;
  std::memset(cfg, 0, sizeof(*cfg));
  cfg->budget = 1.0;
  cfg->steps = 200;
  cfg->step_size = 0.0;
  cfg->restarts = 5;
  cfg->samples_per_step = 64;
  cfg->final_samples = 1000;
  cfg->seed = 0;
  cfg->clip_inputs = 0;
}

lipvae_status lipvae_attack_max_damage(const lipvae_model* m, const double* x,
                                       double r,
                                       const lipvae_attack_config* cfg,
                                       lipvae_attack_result** out) {
  return wrap([&] {
    require_c(m != nullptr && x != nullptr && cfg != nullptr && out != nullptr,
              "null pointer argument");
    auto* h = new lipvae_attack_result;
    try {
      h->r = lipvae::max_damage_attack(
          m->t.model, to_vec(x, m->t.model.config().input_dim), r,
          to_attack_config(*cfg));
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

lipvae_status lipvae_attack_latent(const lipvae_model* m, const double* x,
                                   const double* x_target,
                                   const lipvae_attack_config* cfg,
                                   lipvae_attack_result** out) {
  return wrap([&] {
    require_c(m != nullptr && x != nullptr && x_target != nullptr &&
                  cfg != nullptr && out != nullptr,
              "null pointer argument");
    const lipvae::Index d = m->t.model.config().input_dim;
    auto* h = new lipvae_attack_result;
    try {
      h->r = lipvae::latent_space_attack(m->t.model, to_vec(x, d),
                                         to_vec(x_target, d),
                                         to_attack_config(*cfg));
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

size_t lipvae_attack_result_delta_size(const lipvae_attack_result* r) {
  return r ? static_cast<size_t>(r->r.delta.size()) : 0;
}

lipvae_status lipvae_attack_result_delta(const lipvae_attack_result* r,
                                         double* out) {
  return wrap([&] {
    require_c(r != nullptr && out != nullptr, "null pointer argument");
    std::memcpy(out, r->r.delta.data(),
                sizeof(double) * size_t(r->r.delta.size()));
  });
}

double lipvae_attack_result_objective(const lipvae_attack_result* r) {
  return r ? r->r.objective : 0.0;
}

double lipvae_attack_result_baseline(const lipvae_attack_result* r) {
  return r ? r->r.baseline_objective : 0.0;
}

double lipvae_attack_result_r_probability(const lipvae_attack_result* r) {
  return r ? r->r.r_probability : -1.0;
}

double lipvae_attack_result_max_delta_norm(const lipvae_attack_result* r) {
  return r ? r->r.max_delta_norm : 0.0;
}

int lipvae_attack_result_best_restart(const lipvae_attack_result* r) {
  return r ? r->r.best_restart : 0;
}

size_t lipvae_attack_result_trace_size(const lipvae_attack_result* r) {
  return r ? r->r.trace.size() : 0;
}

size_t lipvae_attack_result_restart_count(const lipvae_attack_result* r) {
  return r ? r->r.restart_objectives.size() : 0;
}

lipvae_status lipvae_attack_result_trace(const lipvae_attack_result* r,
                                         int which, double* out) {
  return wrap([&] {
    require_c(r != nullptr && out != nullptr, "null pointer argument");
    const std::vector<double>* src = nullptr;
    switch (which) {
      case 0:
        src = &r->r.trace;
        break;
      case 1:
        src = &r->r.best_trace;
        break;
      case 2:
        src = &r->r.restart_objectives;
        break;
      default:
        throw std::invalid_argument("trace selector must be 0, 1 or 2");
    }
    std::memcpy(out, src->data(), sizeof(double) * src->size());
  });
}

void lipvae_attack_result_free(lipvae_attack_result* r) { delete r; }

/* ---------- margin ---------- */

lipvae_status lipvae_estimate_margin(const lipvae_model* m, const double* x,
                                     double r, double max_radius, double alpha,
                                     int samples, int attacks, uint64_t seed,
                                     const lipvae_attack_config* template_or_null,
                                     lipvae_margin_estimate** out) {
  return wrap([&] {
    require_c(m != nullptr && x != nullptr && out != nullptr,
              "null pointer argument");
    lipvae::AttackConfig tmpl;
    if (template_or_null != nullptr) tmpl = to_attack_config(*template_or_null);
    auto* h = new lipvae_margin_estimate;
    try {
      h->e = lipvae::estimate_margin(
          m->t.model, to_vec(x, m->t.model.config().input_dim), r, max_radius,
          alpha, samples, attacks, seed, tmpl);
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

double lipvae_margin_value(const lipvae_margin_estimate* e) {
  return e ? e->e.margin : 0.0;
}

int lipvae_margin_found(const lipvae_margin_estimate* e) {
  return (e && e->e.found) ? 1 : 0;
}

size_t lipvae_margin_probe_count(const lipvae_margin_estimate* e) {
  return e ? e->e.probes.size() : 0;
}

lipvae_status lipvae_margin_probe_radius(const lipvae_margin_estimate* e,
                                         size_t i, double* out) {
  return wrap([&] {
    require_c(e != nullptr && out != nullptr, "null pointer argument");
    require_c(i < e->e.probes.size(), "probe index out of range");
    *out = e->e.probes[i].radius;
  });
}

size_t lipvae_margin_probe_prob_count(const lipvae_margin_estimate* e,
                                      size_t i) {
  if (e == nullptr || i >= e->e.probes.size()) return 0;
  return e->e.probes[i].probabilities.size();
}

lipvae_status lipvae_margin_probe_probs(const lipvae_margin_estimate* e,
                                        size_t i, double* out) {
  return wrap([&] {
    require_c(e != nullptr && out != nullptr, "null pointer argument");
    require_c(i < e->e.probes.size(), "probe index out of range");
    const auto& p = e->e.probes[i].probabilities;
    std::memcpy(out, p.data(), sizeof(double) * p.size());
  });
}

void lipvae_margin_estimate_free(lipvae_margin_estimate* e) { delete e; }

} /* extern "C" */
