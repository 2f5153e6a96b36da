#include "vae.hpp"

#include "cont_bernoulli.hpp"

#include <cmath>

namespace lipvae {

double cb_log_likelihood(const Vec& x, const Vec& lambda) {
  require_shape(x.size() == lambda.size(), "cb_log_likelihood: sizes differ");
  require((x.array() >= 0.0).all() && (x.array() <= 1.0).all(),
          "cb_log_likelihood: data must lie in [0, 1]");
  double acc = 0.0;
  for (Index i = 0; i < x.size(); ++i) acc += cb_log_density(x[i], lambda[i]);
  return acc;
}

double kl_to_std_normal(const Vec& mu, const Vec& sigma) {
  require_shape(mu.size() == sigma.size(), "kl_to_std_normal: sizes differ");
  require((sigma.array() > 0.0).all(), "kl_to_std_normal: sigma must be positive");
  double acc = 0.0;
  for (Index i = 0; i < mu.size(); ++i) {
    const double m = mu[i];
    const double s = sigma[i];
    acc += 0.5 * (m * m + s * s - 1.0 - 2.0 * std::log(s));
  }
  return acc;
}

double kl_diag_gaussians(const Vec& mu1, const Vec& s1, const Vec& mu2,
                         const Vec& s2) {
  require_shape(mu1.size() == s1.size() && mu1.size() == mu2.size() &&
                    mu1.size() == s2.size(),
                "kl_diag_gaussians: sizes differ");
  require((s1.array() > 0.0).all() && (s2.array() > 0.0).all(),
          "kl_diag_gaussians: scales must be positive");
  double acc = 0.0;
  for (Index i = 0; i < mu1.size(); ++i) {
    const double dm = mu1[i] - mu2[i];
    const double a = s1[i];
    const double b = s2[i];
    acc += std::log(b / a) + (a * a + dm * dm) / (2.0 * b * b) - 0.5;
  }
  return acc;
}

Vec reparameterize(const Vec& mu, const Vec& sigma, const Vec& eps) {
  require_shape(mu.size() == sigma.size() && mu.size() == eps.size(),
                "reparameterize: sizes differ");
  return mu + sigma.cwiseProduct(eps);
}

namespace {

MlpConfig net_config(const VaeConfig& cfg, Index in, Index out,
                     Activation output_act, double bound) {
  MlpConfig net;
  net.dims.push_back(in);
  for (Index h : cfg.hidden) net.dims.push_back(h);
  net.dims.push_back(out);
  net.hidden_activation =
      cfg.lipschitz ? Activation::kGroupSort : Activation::kRelu;
  net.output_activation = output_act;
  net.constrained = cfg.lipschitz;
  net.lipschitz_bound = bound;
  net.ortho = cfg.ortho;
  return net;
}

}  // namespace

VaeModel::VaeModel(VaeConfig cfg) : cfg_(std::move(cfg)) {
  require(cfg_.input_dim > 0, "vae: input dimension must be positive");
  require(cfg_.latent_dim > 0, "vae: latent dimension must be positive");
  require(cfg_.beta >= 0.0, "vae: beta must be nonnegative");
  if (cfg_.fixed_sigma) {
    require_shape(cfg_.sigma.size() == cfg_.latent_dim,
                  "vae: fixed sigma must have latent dimension");
    require((cfg_.sigma.array() >= 0.0).all(),
            "vae: fixed sigma entries must be nonnegative");
  }
  enc_mean_ = Mlp(net_config(cfg_, cfg_.input_dim, cfg_.latent_dim,
                             Activation::kNone, cfg_.encoder_mean_bound));
  if (!cfg_.fixed_sigma) {
    enc_std_ = Mlp(net_config(cfg_, cfg_.input_dim, cfg_.latent_dim,
                              Activation::kSigmoid, cfg_.encoder_std_bound));
  }
  dec_ = Mlp(net_config(cfg_, cfg_.latent_dim, cfg_.input_dim,
                        Activation::kSigmoid, cfg_.decoder_bound));
}

void VaeModel::init_random(SeededRng& rng) {
  enc_mean_.init_random(rng);
  if (!cfg_.fixed_sigma) enc_std_.init_random(rng);
  dec_.init_random(rng);
}

void VaeModel::freeze() {
  enc_mean_.freeze();
  if (!cfg_.fixed_sigma) enc_std_.freeze();
  dec_.freeze();
}

bool VaeModel::frozen() const {
  return enc_mean_.frozen() && dec_.frozen() &&
         (cfg_.fixed_sigma || enc_std_.frozen());
}

const Mlp& VaeModel::encoder_std() const {
  require(!cfg_.fixed_sigma, "vae: no scale network in fixed-sigma mode");
  return enc_std_;
}

Mlp& VaeModel::mutable_encoder_std() {
  require(!cfg_.fixed_sigma, "vae: no scale network in fixed-sigma mode");
  return enc_std_;
}

const Vec& VaeModel::fixed_sigma_vec() const {
  require(cfg_.fixed_sigma, "vae: model uses a learned scale network");
  return cfg_.sigma;
}

EncoderOutput VaeModel::encode(const Vec& x) const {
  require_shape(x.size() == cfg_.input_dim, "vae: input dimension mismatch");
  EncoderOutput out;
  out.mu = enc_mean_.forward_frozen(x);
  if (cfg_.fixed_sigma) {
    out.sigma = cfg_.sigma;
  } else {
    out.sigma =
        enc_std_.forward_frozen(x).cwiseMax(kSigmaMin).cwiseMin(kSigmaMax);
  }
  return out;
}

Vec VaeModel::decode(const Vec& z) const {
  require_shape(z.size() == cfg_.latent_dim, "vae: latent dimension mismatch");
  return dec_.forward_frozen(z);
}

Mat VaeModel::decode_batch(const Mat& z) const {
  require_shape(z.cols() == cfg_.latent_dim, "vae: latent dimension mismatch");
  return dec_.forward_frozen(z);
}

Vec VaeModel::reconstruct(const Vec& x) const { return decode(encode(x).mu); }

VaeModel::ElboNodes VaeModel::elbo_tape(Tape& t, const Mat& x, const Mat& eps,
                                        Mlp::TapeParams* params) const {
  require_shape(x.cols() == cfg_.input_dim, "vae: input dimension mismatch");
  require_shape(eps.rows() == x.rows() && eps.cols() == cfg_.latent_dim,
                "vae: eps must be batch x latent");
  const Tape::Id xid = t.constant(x);
  const Tape::Id mu = enc_mean_.forward_tape(t, xid, params);
  Tape::Id sigma;
  Tape::Id z;
  if (cfg_.fixed_sigma) {
    Mat sig_rep(x.rows(), cfg_.latent_dim);
    sig_rep.rowwise() = cfg_.sigma.transpose();
    sigma = t.constant(sig_rep);
    // sigma .* eps is a constant here; fold it before entering the graph.
    z = t.add(mu, t.constant(eps.array().rowwise() *
                             cfg_.sigma.transpose().array()));
  } else {
    const Tape::Id raw = enc_std_.forward_tape(t, xid, params);
    sigma = t.clamp(raw, kSigmaMin, kSigmaMax);
    z = t.add(mu, t.hadamard(sigma, t.constant(eps)));
  }
  const Tape::Id lambda = dec_.forward_tape(t, z, params);
  ElboNodes nodes;
  nodes.recon_rows = t.cb_log_likelihood_rows(lambda, xid);
  nodes.kl_rows = t.kl_std_normal_rows(mu, sigma);
  nodes.elbo =
      t.mean_all(t.sub(nodes.recon_rows, t.scale(nodes.kl_rows, cfg_.beta)));
  return nodes;
}

double VaeModel::elbo_value(const Mat& x, const Mat& eps) const {
  require_shape(x.cols() == cfg_.input_dim, "vae: input dimension mismatch");
  require_shape(eps.rows() == x.rows() && eps.cols() == cfg_.latent_dim,
                "vae: eps must be batch x latent");
  const Mat mu = enc_mean_.forward_train(x);
  Mat sigma;
  if (cfg_.fixed_sigma) {
    sigma.resize(x.rows(), cfg_.latent_dim);
    sigma.rowwise() = cfg_.sigma.transpose();
  } else {
    sigma = enc_std_.forward_train(x).cwiseMax(kSigmaMin).cwiseMin(kSigmaMax);
  }
  const Mat z = mu + sigma.cwiseProduct(eps);
  const Mat lambda = dec_.forward_train(z);
  double acc = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    double recon = 0.0;
    for (Index j = 0; j < x.cols(); ++j)
      recon += cb_log_density(x(i, j), lambda(i, j));
    double kl = 0.0;
    for (Index j = 0; j < cfg_.latent_dim; ++j) {
      const double m = mu(i, j);
      const double s = sigma(i, j);
      kl += 0.5 * (m * m + s * s - 1.0 - 2.0 * std::log(s));
    }
    acc += recon - cfg_.beta * kl;
  }
  return acc / static_cast<double>(x.rows());
}

VaeModel::EncoderNodes VaeModel::encode_frozen_tape(Tape& t, Tape::Id x) const {
  EncoderNodes out;
  out.mu = enc_mean_.forward_frozen_tape(t, x);
  if (cfg_.fixed_sigma) {
    Mat sig(t.value(x).rows(), cfg_.latent_dim);
    sig.rowwise() = cfg_.sigma.transpose();
    out.sigma = t.constant(std::move(sig));
  } else {
    out.sigma = t.clamp(enc_std_.forward_frozen_tape(t, x), kSigmaMin, kSigmaMax);
  }
  return out;
}

Tape::Id VaeModel::decode_frozen_tape(Tape& t, Tape::Id z) const {
  return dec_.forward_frozen_tape(t, z);
}

double VaeModel::decoder_constant() const {
  if (!cfg_.lipschitz)
    throw not_certifiable_error(
        "vae: unconstrained model carries no decoder certificate");
  return dec_.certified_constant();
}

double VaeModel::encoder_mean_constant() const {
  if (!cfg_.lipschitz)
    throw not_certifiable_error(
        "vae: unconstrained model carries no encoder certificate");
  return enc_mean_.certified_constant();
}

double VaeModel::encoder_std_constant() const {
  if (!cfg_.lipschitz)
    throw not_certifiable_error(
        "vae: unconstrained model carries no encoder certificate");
  if (cfg_.fixed_sigma) return 0.0;
  return enc_std_.certified_constant();
}

}  // namespace lipvae
