#pragma once

#include "common.hpp"

#include <cstdint>
#include <vector>

namespace lipvae {

// Reverse-mode tape over dense matrices.  Nodes are appended in topological
// order; backward() walks them in reverse.  Gradients only accumulate into
// nodes that (transitively) require them, so frozen-weight passes pay nothing
// for parameter gradients.  Scalars are 1x1 matrices.
class Tape {
 public:
  using Id = std::int32_t;

  Id input(Mat value, bool requires_grad);
  Id constant(Mat value) { return input(std::move(value), false); }
  Id constant_row(const Vec& v);

  // y = a * b
  Id matmul(Id a, Id b);
  // y = a * b^T
  Id matmul_nt(Id a, Id b);
  // y = a^T * b
  Id matmul_tn(Id a, Id b);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id hadamard(Id a, Id b);
  // y = a + ones * row   (row is 1 x cols)
  Id add_row(Id a, Id row);
  // y = a .* (ones * row)
  Id mul_row(Id a, Id row);
  Id scale(Id a, double s);
  // y = I - a  (a square)
  Id identity_minus(Id a);
  Id transpose(Id a);
  // Ascending sort within consecutive column pairs, applied per row.
  Id group_sort_pairs(Id a);
  Id relu(Id a);
  Id sigmoid(Id a);
  Id clamp(Id a, double lo, double hi);
  // Column vector of row norms.
  Id row_l2_norms(Id a);
  Id sum_all(Id a);
  Id mean_all(Id a);
  // Per-row Continuous Bernoulli log-likelihood of data x under parameters
  // lambda (same shape); lambda is clamped internally.
  Id cb_log_likelihood_rows(Id lambda, Id x);
  // Per-row KL( N(mu, diag sigma^2) || N(0, I) ).
  Id kl_std_normal_rows(Id mu, Id sigma);
  // Per-row KL( N(mu1, diag s1^2) || N(mu2, diag s2^2) ).
  Id kl_diag_gaussian_rows(Id mu1, Id s1, Id mu2, Id s2);

  const Mat& value(Id id) const;
  bool requires_grad(Id id) const;

  // Seeds d(out)/d(out) = 1 for a scalar node and propagates.  Gradients are
  // reset on every call.
  void backward(Id out);
  // Zero matrix of the node's shape if the node received no gradient.
  Mat grad(Id id) const;

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatMul,
    kMatMulNT,
    kMatMulTN,
    kAdd,
    kSub,
    kHadamard,
    kAddRow,
    kMulRow,
    kScale,
    kIdentityMinus,
    kTranspose,
    kGroupSort,
    kRelu,
    kSigmoid,
    kClamp,
    kRowL2Norms,
    kSumAll,
    kMeanAll,
    kCbRows,
    kKlStdRows,
    kKlDiagRows,
  };

  struct Node {
    Mat value;
    Mat grad;  // empty until touched by backward
    Op op = Op::kLeaf;
    Id a = -1, b = -1, c = -1, d = -1;
    double s0 = 0.0, s1 = 0.0;
    bool needs_grad = false;
  };

  Id push(Node n);
  Node& at(Id id);
  const Node& at(Id id) const;
  void accumulate(Id id, const Mat& g);
  void backprop(Id id);

  std::vector<Node> nodes_;
};

}  // namespace lipvae
