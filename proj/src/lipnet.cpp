#include "lipnet.hpp"

#include <cmath>
#include <string>

namespace lipvae {

namespace {

// Taylor coefficients of (I - Q)^(-1/2): 1, 1/2, 3/8, 5/16, ...
std::vector<double> bjorck_coefficients(int order) {
  std::vector<double> c(static_cast<std::size_t>(order) + 1);
  c[0] = 1.0;
  for (int k = 1; k <= order; ++k)
    c[k] = c[k - 1] * (2.0 * k - 1.0) / (2.0 * k);
  return c;
}

// Spectral norm of the tall factor by power iteration on its Gram.  The
// update polynomial contracts any spectrum inside (0, sqrt(3)), so a few
// percent of underestimate is harmless, while the loose sqrt(|W|_1 |W|_inf)
// bound costs several growth iterations out of a fixed budget.
double safe_scale_factor(const Mat& w) {
  const Mat gram = w.transpose() * w;
  Index start = 0;
  gram.diagonal().maxCoeff(&start);
  Vec v = gram.col(start);
  double lambda = 0.0;
  for (int it = 0; it < 50; ++it) {
    const double n = l2_norm(v);
    if (n == 0.0) return 0.0;
    v /= n;
    Vec gv = gram * v;
    lambda = v.dot(gv);
    v = std::move(gv);
  }
  return std::sqrt(std::max(lambda, 0.0));
}

void validate_ortho(const OrthoConfig& cfg) {
  require(cfg.iterations >= 0, "bjorck: iteration count must be >= 0");
  require(cfg.order >= 1, "bjorck: polynomial order must be >= 1");
  require(cfg.tolerance > 0.0, "bjorck: tolerance must be positive");
}

}  // namespace

double orthonormality_residual(const Mat& w) {
  const bool wide = w.rows() < w.cols();
  const Mat gram = wide ? Mat(w * w.transpose()) : Mat(w.transpose() * w);
  return (gram - Mat::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

BjorckResult bjorck_orthonormalize(const Mat& w, const OrthoConfig& cfg) {
  validate_ortho(cfg);
  require_shape(w.size() > 0, "bjorck: empty matrix");
  const bool wide = w.rows() < w.cols();
  Mat a = wide ? Mat(w.transpose()) : w;
  if (cfg.safe_scaling) {
    const double s = safe_scale_factor(a);
    if (s == 0.0) throw numeric_error("bjorck: cannot orthonormalize a zero matrix");
    a /= s;
  }
  const std::vector<double> coef = bjorck_coefficients(cfg.order);
  const Index n = a.cols();
  for (int it = 0; it < cfg.iterations; ++it) {
    const Mat q = Mat::Identity(n, n) - a.transpose() * a;
    Mat poly = Mat::Identity(n, n) + coef[1] * q;
    Mat qpow = q;
    for (int k = 2; k <= cfg.order; ++k) {
      qpow = qpow * q;
      poly += coef[static_cast<std::size_t>(k)] * qpow;
    }
    a = a * poly;
    if (!a.allFinite())
      throw numeric_error("bjorck: non-finite values at iteration " +
                          std::to_string(it + 1));
  }
  BjorckResult out;
  out.residual =
      (a.transpose() * a - Mat::Identity(n, n)).cwiseAbs().maxCoeff();
  out.converged = out.residual <= cfg.tolerance;
  out.weight = wide ? Mat(a.transpose()) : std::move(a);
  return out;
}

Tape::Id bjorck_orthonormalize_tape(Tape& t, Tape::Id w, const OrthoConfig& cfg) {
  validate_ortho(cfg);
  require_shape(t.value(w).size() > 0, "bjorck: empty matrix");
  const bool wide = t.value(w).rows() < t.value(w).cols();
  Tape::Id a = wide ? t.transpose(w) : w;
  if (cfg.safe_scaling) {
    const double s = safe_scale_factor(t.value(a));
    if (s == 0.0) throw numeric_error("bjorck: cannot orthonormalize a zero matrix");
    a = t.scale(a, 1.0 / s);
  }
  const std::vector<double> coef = bjorck_coefficients(cfg.order);
  const Index n = t.value(a).cols();
  const Tape::Id eye = t.constant(Mat::Identity(n, n));
  for (int it = 0; it < cfg.iterations; ++it) {
    const Tape::Id q = t.identity_minus(t.matmul_tn(a, a));
    Tape::Id poly = t.add(eye, t.scale(q, coef[1]));
    Tape::Id qpow = q;
    for (int k = 2; k <= cfg.order; ++k) {
      qpow = t.matmul(qpow, q);
      poly = t.add(poly, t.scale(qpow, coef[static_cast<std::size_t>(k)]));
    }
    a = t.matmul(a, poly);
    if (!t.value(a).allFinite())
      throw numeric_error("bjorck: non-finite values at iteration " +
                          std::to_string(it + 1));
  }
  return wide ? t.transpose(a) : a;
}

Vec group_sort(const Vec& v) {
  require_shape(v.size() % 2 == 0,
                "group_sort: length must be even for group size 2");
  Vec out = v;
  for (Index j = 0; j + 1 < v.size(); j += 2) {
    if (out[j] > out[j + 1]) std::swap(out[j], out[j + 1]);
  }
  return out;
}

Mat group_sort_rows(const Mat& m) {
  require_shape(m.cols() % 2 == 0,
                "group_sort: width must be even for group size 2");
  Mat out = m;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j + 1 < m.cols(); j += 2) {
      if (out(i, j) > out(i, j + 1)) std::swap(out(i, j), out(i, j + 1));
    }
  }
  return out;
}

Mlp::Mlp(MlpConfig cfg) : cfg_(std::move(cfg)) {
  require(cfg_.dims.size() >= 2, "mlp: need at least input and output dims");
  for (Index d : cfg_.dims) require(d > 0, "mlp: dimensions must be positive");
  if (cfg_.constrained)
    require(cfg_.lipschitz_bound > 0.0, "mlp: Lipschitz bound must be positive");
  if (cfg_.hidden_activation == Activation::kGroupSort) {
    for (std::size_t i = 1; i + 1 < cfg_.dims.size(); ++i)
      require(cfg_.dims[i] % 2 == 0,
              "mlp: GroupSort hidden widths must be even");
  }
  require(cfg_.output_activation != Activation::kGroupSort ||
              cfg_.dims.back() % 2 == 0,
          "mlp: GroupSort output width must be even");
  validate_ortho(cfg_.ortho);
  layers_.resize(cfg_.dims.size() - 1);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].weight = Mat::Zero(cfg_.dims[l + 1], cfg_.dims[l]);
    layers_[l].bias = Vec::Zero(cfg_.dims[l + 1]);
  }
}

void Mlp::init_random(SeededRng& rng) {
  for (DenseLayer& layer : layers_) {
    const Index rows = layer.weight.rows();
    const Index cols = layer.weight.cols();
    if (cfg_.constrained) {
      // Near-orthonormal start: a raw random matrix can be arbitrarily ill
      // conditioned and eat the whole fixed iteration budget; the projected
      // point is as good a random start and keeps every draw well inside it.
      const Index big = std::max(rows, cols);
      const Index small = std::min(rows, cols);
      const Mat g = rng.normal_mat(big, small);
      Eigen::HouseholderQR<Mat> qr(g);
      Mat q = qr.householderQ() * Mat::Identity(big, small);
      for (Index j = 0; j < small; ++j) {
        if (qr.matrixQR()(j, j) < 0.0) q.col(j) = -q.col(j);
      }
      layer.weight = rows < cols ? Mat(q.transpose()) : std::move(q);
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
      layer.weight = rng.uniform_mat(rows, cols, -bound, bound);
    }
    layer.bias.setZero();
  }
  frozen_ = false;
}

double Mlp::layer_scale() const {
  if (!cfg_.constrained) return 1.0;
  return std::pow(cfg_.lipschitz_bound,
                  1.0 / static_cast<double>(layers_.size()));
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers_)
    n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::vector<DenseLayer>& Mlp::mutable_layers() {
  frozen_ = false;
  return layers_;
}

Tape::Id Mlp::apply_activation(Tape& t, Tape::Id pre, Activation act) const {
  switch (act) {
    case Activation::kNone: return pre;
    case Activation::kGroupSort: return t.group_sort_pairs(pre);
    case Activation::kRelu: return t.relu(pre);
    case Activation::kSigmoid: return t.sigmoid(pre);
  }
  throw std::invalid_argument("mlp: unknown activation");
}

Mat Mlp::apply_activation(Mat pre, Activation act) const {
  switch (act) {
    case Activation::kNone: return pre;
    case Activation::kGroupSort: return group_sort_rows(pre);
    case Activation::kRelu: return pre.cwiseMax(0.0);
    case Activation::kSigmoid: {
      return pre.unaryExpr([](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
    }
  }
  throw std::invalid_argument("mlp: unknown activation");
}

Tape::Id Mlp::forward_tape(Tape& t, Tape::Id x, TapeParams* params) const {
  require_shape(t.value(x).cols() == input_dim(),
                "mlp: input width does not match first layer");
  const double scale = layer_scale();
  Tape::Id h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Tape::Id w = t.input(layers_[l].weight, true);
    const Tape::Id b = t.input(Mat(layers_[l].bias.transpose()), true);
    if (params) {
      params->weights.push_back(w);
      params->biases.push_back(b);
    }
    Tape::Id weff = w;
    Tape::Id pre;
    if (cfg_.constrained) {
      weff = bjorck_orthonormalize_tape(t, w, cfg_.ortho);
      pre = t.add_row(t.scale(t.matmul_nt(h, weff), scale), b);
    } else {
      pre = t.add_row(t.matmul_nt(h, weff), b);
    }
    const Activation act = (l + 1 == layers_.size()) ? cfg_.output_activation
                                                     : cfg_.hidden_activation;
    h = apply_activation(t, pre, act);
  }
  return h;
}

Mat Mlp::forward_train(const Mat& x) const {
  require_shape(x.cols() == input_dim(),
                "mlp: input width does not match first layer");
  const double scale = layer_scale();
  Mat h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Mat weff = cfg_.constrained
                   ? bjorck_orthonormalize(layers_[l].weight, cfg_.ortho).weight
                   : layers_[l].weight;
    Mat pre = h * weff.transpose();
    if (cfg_.constrained) pre *= scale;
    pre.rowwise() += layers_[l].bias.transpose();
    const Activation act = (l + 1 == layers_.size()) ? cfg_.output_activation
                                                     : cfg_.hidden_activation;
    h = apply_activation(std::move(pre), act);
  }
  return h;
}

void Mlp::freeze() {
  frozen_weights_.clear();
  frozen_residuals_.clear();
  frozen_weights_.reserve(layers_.size());
  frozen_residuals_.reserve(layers_.size());
  for (const DenseLayer& layer : layers_) {
    if (cfg_.constrained) {
      BjorckResult r = bjorck_orthonormalize(layer.weight, cfg_.ortho);
      frozen_weights_.push_back(std::move(r.weight));
      frozen_residuals_.push_back(r.residual);
    } else {
      frozen_weights_.push_back(layer.weight);
      frozen_residuals_.push_back(0.0);
    }
  }
  frozen_ = true;
}

Tape::Id Mlp::forward_frozen_tape(Tape& t, Tape::Id x) const {
  require(frozen_, "mlp: freeze() before frozen-path evaluation");
  require_shape(t.value(x).cols() == input_dim(),
                "mlp: input width does not match first layer");
  const double scale = layer_scale();
  Tape::Id h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Tape::Id w = t.constant(frozen_weights_[l]);
    const Tape::Id b = t.constant(Mat(layers_[l].bias.transpose()));
    Tape::Id pre = t.matmul_nt(h, w);
    if (cfg_.constrained) pre = t.scale(pre, scale);
    pre = t.add_row(pre, b);
    const Activation act = (l + 1 == layers_.size()) ? cfg_.output_activation
                                                     : cfg_.hidden_activation;
    h = apply_activation(t, pre, act);
  }
  return h;
}

Mat Mlp::forward_frozen(const Mat& x) const {
  require(frozen_, "mlp: freeze() before frozen-path evaluation");
  require_shape(x.cols() == input_dim(),
                "mlp: input width does not match first layer");
  const double scale = layer_scale();
  Mat h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Mat pre = h * frozen_weights_[l].transpose();
    if (cfg_.constrained) pre *= scale;
    pre.rowwise() += layers_[l].bias.transpose();
    const Activation act = (l + 1 == layers_.size()) ? cfg_.output_activation
                                                     : cfg_.hidden_activation;
    h = apply_activation(std::move(pre), act);
  }
  return h;
}

Vec Mlp::forward_frozen(const Vec& x) const {
  Mat row(1, x.size());
  row.row(0) = x.transpose();
  return forward_frozen(row).row(0).transpose();
}

double Mlp::certified_constant(bool tight_sigmoid) const {
  if (!cfg_.constrained)
    throw not_certifiable_error(
        "certified_constant: unconstrained network carries no certificate");
  if (!frozen_)
    throw not_certifiable_error(
        "certified_constant: stale weights; freeze() after the last update");
  for (std::size_t l = 0; l < frozen_residuals_.size(); ++l) {
    if (frozen_residuals_[l] > cfg_.ortho.tolerance)
      throw not_certifiable_error(
          "certified_constant: layer " + std::to_string(l) +
          " Gram residual " + std::to_string(frozen_residuals_[l]) +
          " exceeds tolerance");
  }
  double m = cfg_.lipschitz_bound;
  if (tight_sigmoid && cfg_.output_activation == Activation::kSigmoid)
    m *= 0.25;
  return m;
}

double empirical_lipschitz(const Mlp& net, int n_pairs, SeededRng& rng) {
  require(n_pairs > 0, "empirical_lipschitz: need at least one pair");
  const Index d = net.input_dim();
  const Mat x1 = rng.uniform_mat(n_pairs, d, 0.0, 1.0);
  const Mat x2 = rng.uniform_mat(n_pairs, d, 0.0, 1.0);
  const Mat y1 = net.forward_frozen(x1);
  const Mat y2 = net.forward_frozen(x2);
  const Vec din = row_l2_norms(x1 - x2);
  const Vec dout = row_l2_norms(y1 - y2);
  double best = 0.0;
  for (Index i = 0; i < din.size(); ++i) {
    if (din[i] == 0.0) continue;
    best = std::max(best, dout[i] / din[i]);
  }
  return best;
}

}  // namespace lipvae
