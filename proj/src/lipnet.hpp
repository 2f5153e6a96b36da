#pragma once

#include "common.hpp"
#include "numerics.hpp"
#include "tape.hpp"

#include <vector>

namespace lipvae {

struct OrthoConfig {
  int iterations = 20;      // unrolled iteration count
  int order = 1;            // polynomial order per iteration
  double tolerance = 1e-6;  // max-abs Gram residual accepted for certification
  bool safe_scaling = true; // pre-divide by sqrt(norm1 * norminf)
};

struct BjorckResult {
  Mat weight;
  double residual;  // max-abs entry of the Gram residual, smaller dimension
  bool converged;   // residual <= cfg.tolerance
};

// Iterative orthonormalization towards the nearest semi-orthonormal matrix.
// Wide matrices are processed through their transpose, so the Gram identity
// always holds on the smaller dimension.  Without safe scaling the caller
// must keep the spectral norm below sqrt(3) or the iteration diverges.
BjorckResult bjorck_orthonormalize(const Mat& w, const OrthoConfig& cfg);

// Same iteration recorded on a tape.  The safe pre-scaling factor enters as a
// constant of the current value: the converged iterate does not depend on the
// scale, so the dropped derivative term is of the order of the residual.
Tape::Id bjorck_orthonormalize_tape(Tape& t, Tape::Id w, const OrthoConfig& cfg);

double orthonormality_residual(const Mat& w);

// Ascending sort within consecutive pairs (group size 2); length must be even.
Vec group_sort(const Vec& v);
Mat group_sort_rows(const Mat& m);

enum class Activation { kNone, kGroupSort, kRelu, kSigmoid };

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;    // out
};

struct MlpConfig {
  std::vector<Index> dims;  // [input, hidden..., output]
  Activation hidden_activation = Activation::kGroupSort;
  Activation output_activation = Activation::kNone;
  // Constrained nets apply orthonormalization and a per-layer scale of
  // lipschitz_bound^(1/L); unconstrained nets use raw weights.
  bool constrained = true;
  double lipschitz_bound = 1.0;
  OrthoConfig ortho;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpConfig cfg);

  void init_random(SeededRng& rng);

  struct TapeParams {
    std::vector<Tape::Id> weights;
    std::vector<Tape::Id> biases;
  };

  // Training path: raw parameters become gradient leaves and constrained
  // weights are re-orthonormalized inside the graph on every call.
  Tape::Id forward_tape(Tape& t, Tape::Id x, TapeParams* params) const;

  // Frozen inference path: effective weights are cached constants, gradients
  // flow to the input only.  Requires freeze().
  Tape::Id forward_frozen_tape(Tape& t, Tape::Id x) const;
  Mat forward_frozen(const Mat& x) const;
  Vec forward_frozen(const Vec& x) const;

  // Value-only twin of forward_tape: re-orthonormalizes per call, no cache.
  Mat forward_train(const Mat& x) const;

  // Cache effective (orthonormalized) weights for inference.
  void freeze();
  bool frozen() const { return frozen_; }

  // Configured Lipschitz bound, validated against the frozen weights.  Throws
  // for unconstrained nets, stale caches, or Gram residuals above tolerance.
  // The tight flag sharpens a final Sigmoid by its derivative bound of 1/4.
  double certified_constant(bool tight_sigmoid = false) const;

  const MlpConfig& config() const { return cfg_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  // Mutation invalidates the frozen cache.
  std::vector<DenseLayer>& mutable_layers();

  Index input_dim() const { return cfg_.dims.front(); }
  Index output_dim() const { return cfg_.dims.back(); }
  double layer_scale() const;
  std::size_t parameter_count() const;

 private:
  Tape::Id apply_activation(Tape& t, Tape::Id pre, Activation act) const;
  Mat apply_activation(Mat pre, Activation act) const;

  MlpConfig cfg_;
  std::vector<DenseLayer> layers_;
  std::vector<Mat> frozen_weights_;
  std::vector<double> frozen_residuals_;
  bool frozen_ = false;
};

// Largest ratio |f(x1) - f(x2)| / |x1 - x2| over random pairs in [0,1]^d.
double empirical_lipschitz(const Mlp& net, int n_pairs, SeededRng& rng);

}  // namespace lipvae
