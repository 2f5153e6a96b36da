#pragma once

#include "common.hpp"
#include "lipnet.hpp"

#include <optional>

namespace lipvae {

// Bounds for the encoder scale head (Sigmoid output, then clamped).
inline constexpr double kSigmaMin = 1e-6;
inline constexpr double kSigmaMax = 1.0;

// Sum over coordinates of the Continuous Bernoulli log-density.
double cb_log_likelihood(const Vec& x, const Vec& lambda);
// KL( N(mu, diag sigma^2) || N(0, I) ).
double kl_to_std_normal(const Vec& mu, const Vec& sigma);
// KL( N(mu1, diag s1^2) || N(mu2, diag s2^2) ), closed form.
double kl_diag_gaussians(const Vec& mu1, const Vec& s1, const Vec& mu2,
                         const Vec& s2);
// mu + sigma .* eps
Vec reparameterize(const Vec& mu, const Vec& sigma, const Vec& eps);

struct VaeConfig {
  Index input_dim = 784;
  Index latent_dim = 10;
  std::vector<Index> hidden = {512, 512, 512};
  // Lipschitz mode: orthonormalized weights with GroupSort hidden units.
  // Otherwise plain dense layers with ReLU hidden units.
  bool lipschitz = true;
  double decoder_bound = 1.0;
  double encoder_mean_bound = 1.0;
  double encoder_std_bound = 1.0;
  // Fixed-scale posterior: the scale head is replaced by a constant vector.
  bool fixed_sigma = false;
  Vec sigma;
  double beta = 1.0;
  OrthoConfig ortho;
};

struct EncoderOutput {
  Vec mu;
  Vec sigma;
};

class VaeModel {
 public:
  VaeModel() = default;
  explicit VaeModel(VaeConfig cfg);

  void init_random(SeededRng& rng);
  // Cache effective weights of all networks for inference.
  void freeze();
  bool frozen() const;

  EncoderOutput encode(const Vec& x) const;
  Vec decode(const Vec& z) const;
  Mat decode_batch(const Mat& z) const;
  // decode(mu(x)): the deterministic reconstruction used for dumps.
  Vec reconstruct(const Vec& x) const;

  struct ElboNodes {
    Tape::Id elbo;        // scalar, mean over the batch
    Tape::Id recon_rows;  // per-example reconstruction log-likelihood
    Tape::Id kl_rows;     // per-example KL
  };
  // beta-weighted ELBO with one reparameterization draw per example.
  // Parameters enumerate as: encoder mean, encoder scale (if any), decoder.
  ElboNodes elbo_tape(Tape& t, const Mat& x, const Mat& eps,
                      Mlp::TapeParams* params) const;
  // Value twin of elbo_tape (training semantics, no cache).
  double elbo_value(const Mat& x, const Mat& eps) const;

  struct EncoderNodes {
    Tape::Id mu;
    Tape::Id sigma;
  };
  // Frozen-path graph pieces for input-gradient consumers.
  EncoderNodes encode_frozen_tape(Tape& t, Tape::Id x) const;
  Tape::Id decode_frozen_tape(Tape& t, Tape::Id z) const;

  // Certified network constants; throw not_certifiable_error outside
  // Lipschitz mode or when a cache is stale.
  double decoder_constant() const;
  double encoder_mean_constant() const;
  double encoder_std_constant() const;  // 0 in fixed-scale mode

  const VaeConfig& config() const { return cfg_; }
  const Mlp& encoder_mean() const { return enc_mean_; }
  const Mlp& encoder_std() const;
  const Mlp& decoder() const { return dec_; }
  Mlp& mutable_encoder_mean() { return enc_mean_; }
  Mlp& mutable_encoder_std();
  Mlp& mutable_decoder() { return dec_; }
  bool has_std_net() const { return !cfg_.fixed_sigma; }
  const Vec& fixed_sigma_vec() const;

 private:
  VaeConfig cfg_;
  Mlp enc_mean_;
  Mlp enc_std_;  // unused in fixed-scale mode
  Mlp dec_;
};

}  // namespace lipvae
