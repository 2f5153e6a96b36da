#include "tape.hpp"

#include "cont_bernoulli.hpp"
#include "numerics.hpp"

#include <cmath>
#include <string>

namespace lipvae {

namespace {

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Node& Tape::at(Id id) { return nodes_[static_cast<std::size_t>(id)]; }

const Tape::Node& Tape::at(Id id) const {
  return nodes_[static_cast<std::size_t>(id)];
}

const Mat& Tape::value(Id id) const { return at(id).value; }

bool Tape::requires_grad(Id id) const { return at(id).needs_grad; }

Tape::Id Tape::input(Mat value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.op = Op::kLeaf;
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::constant_row(const Vec& v) {
  Mat m(1, v.size());
  m.row(0) = v.transpose();
  return constant(std::move(m));
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  require_shape(A.cols() == B.rows(), "matmul: inner dimensions differ");
  Node n;
  n.value = A * B;
  n.op = Op::kMatMul;
  n.a = a;
  n.b = b;
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  require_shape(A.cols() == B.cols(), "matmul_nt: inner dimensions differ");
  Node n;
  n.value = A * B.transpose();
  n.op = Op::kMatMulNT;
  n.a = a;
  n.b = b;
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::matmul_tn(Id a, Id b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  require_shape(A.rows() == B.rows(), "matmul_tn: inner dimensions differ");
  Node n;
  n.value = A.transpose() * B;
  n.op = Op::kMatMulTN;
  n.a = a;
  n.b = b;
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  require_shape(A.rows() == B.rows() && A.cols() == B.cols(),
                "add: shapes differ");
  Node n;
  n.value = A + B;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  require_shape(A.rows() == B.rows() && A.cols() == B.cols(),
                "sub: shapes differ");
  Node n;
  n.value = A - B;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::hadamard(Id a, Id b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  require_shape(A.rows() == B.rows() && A.cols() == B.cols(),
                "hadamard: shapes differ");
  Node n;
  n.value = A.cwiseProduct(B);
  n.op = Op::kHadamard;
  n.a = a;
  n.b = b;
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::add_row(Id a, Id row) {
  const Mat& A = value(a);
  const Mat& R = value(row);
  require_shape(R.rows() == 1 && R.cols() == A.cols(),
                "add_row: row must be 1 x cols");
  Node n;
  n.value = A.rowwise() + R.row(0);
  n.op = Op::kAddRow;
  n.a = a;
  n.b = row;
  n.needs_grad = at(a).needs_grad || at(row).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::mul_row(Id a, Id row) {
  const Mat& A = value(a);
  const Mat& R = value(row);
  require_shape(R.rows() == 1 && R.cols() == A.cols(),
                "mul_row: row must be 1 x cols");
  Node n;
  n.value = A.array().rowwise() * R.row(0).array();
  n.op = Op::kMulRow;
  n.a = a;
  n.b = row;
  n.needs_grad = at(a).needs_grad || at(row).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double s) {
  Node n;
  n.value = value(a) * s;
  n.op = Op::kScale;
  n.a = a;
  n.s0 = s;
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::identity_minus(Id a) {
  const Mat& A = value(a);
  require_shape(A.rows() == A.cols(), "identity_minus: matrix must be square");
  Node n;
  n.value = Mat::Identity(A.rows(), A.cols()) - A;
  n.op = Op::kIdentityMinus;
  n.a = a;
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::transpose(Id a) {
  Node n;
  n.value = value(a).transpose();
  n.op = Op::kTranspose;
  n.a = a;
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::group_sort_pairs(Id a) {
  const Mat& A = value(a);
  require_shape(A.cols() % 2 == 0,
                "group_sort_pairs: width must be even for group size 2");
  Node n;
  n.value = A;
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j + 1 < A.cols(); j += 2) {
      const double lo = A(i, j);
      const double hi = A(i, j + 1);
      if (lo > hi) {
        n.value(i, j) = hi;
        n.value(i, j + 1) = lo;
      }
    }
  }
  n.op = Op::kGroupSort;
  n.a = a;
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::relu(Id a) {
  Node n;
  n.value = value(a).cwiseMax(0.0);
  n.op = Op::kRelu;
  n.a = a;
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::sigmoid(Id a) {
  const Mat& A = value(a);
  Node n;
  n.value = A.unaryExpr([](double x) { return sigmoid_scalar(x); });
  n.op = Op::kSigmoid;
  n.a = a;
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::clamp(Id a, double lo, double hi) {
  require(lo <= hi, "clamp: lo must not exceed hi");
  Node n;
  n.value = value(a).cwiseMax(lo).cwiseMin(hi);
  n.op = Op::kClamp;
  n.a = a;
  n.s0 = lo;
  n.s1 = hi;
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::row_l2_norms(Id a) {
  const Mat& A = value(a);
  Node n;
  n.value = Mat(A.rows(), 1);
  n.value.col(0) = lipvae::row_l2_norms(A);
  n.op = Op::kRowL2Norms;
  n.a = a;
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::sum_all(Id a) {
  Node n;
  n.value = Mat::Constant(1, 1, value(a).sum());
  n.op = Op::kSumAll;
  n.a = a;
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::mean_all(Id a) {
  require_shape(value(a).size() > 0, "mean_all: empty matrix");
  Node n;
  n.value = Mat::Constant(1, 1, value(a).mean());
  n.op = Op::kMeanAll;
  n.a = a;
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::cb_log_likelihood_rows(Id lambda, Id x) {
  const Mat& L = value(lambda);
  const Mat& X = value(x);
  require_shape(L.rows() == X.rows() && L.cols() == X.cols(),
                "cb_log_likelihood_rows: shapes differ");
  require(!at(x).needs_grad,
          "cb_log_likelihood_rows: data input must not require gradients");
  Node n;
  n.value = Mat(L.rows(), 1);
  for (Index i = 0; i < L.rows(); ++i) {
    double acc = 0.0;
    for (Index j = 0; j < L.cols(); ++j) acc += cb_log_density(X(i, j), L(i, j));
    n.value(i, 0) = acc;
  }
  n.op = Op::kCbRows;
  n.a = lambda;
  n.b = x;
  n.needs_grad = at(lambda).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::kl_std_normal_rows(Id mu, Id sigma) {
  const Mat& M = value(mu);
  const Mat& S = value(sigma);
  require_shape(M.rows() == S.rows() && M.cols() == S.cols(),
                "kl_std_normal_rows: shapes differ");
  require((S.array() > 0.0).all(),
          "kl_std_normal_rows: sigma must be positive");
  Node n;
  n.value = Mat(M.rows(), 1);
  for (Index i = 0; i < M.rows(); ++i) {
    double acc = 0.0;
    for (Index j = 0; j < M.cols(); ++j) {
      const double m = M(i, j);
      const double s = S(i, j);
      acc += 0.5 * (m * m + s * s - 1.0 - 2.0 * std::log(s));
    }
    n.value(i, 0) = acc;
  }
  n.op = Op::kKlStdRows;
  n.a = mu;
  n.b = sigma;
  n.needs_grad = at(mu).needs_grad || at(sigma).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::kl_diag_gaussian_rows(Id mu1, Id s1, Id mu2, Id s2) {
  const Mat& M1 = value(mu1);
  const Mat& S1 = value(s1);
  const Mat& M2 = value(mu2);
  const Mat& S2 = value(s2);
  require_shape(M1.rows() == S1.rows() && M1.cols() == S1.cols() &&
                    M1.rows() == M2.rows() && M1.cols() == M2.cols() &&
                    M1.rows() == S2.rows() && M1.cols() == S2.cols(),
                "kl_diag_gaussian_rows: shapes differ");
  require((S1.array() > 0.0).all() && (S2.array() > 0.0).all(),
          "kl_diag_gaussian_rows: scales must be positive");
  Node n;
  n.value = Mat(M1.rows(), 1);
  for (Index i = 0; i < M1.rows(); ++i) {
    double acc = 0.0;
    for (Index j = 0; j < M1.cols(); ++j) {
      const double dm = M1(i, j) - M2(i, j);
      const double a = S1(i, j);
      const double b = S2(i, j);
      acc += std::log(b / a) + (a * a + dm * dm) / (2.0 * b * b) - 0.5;
    }
    n.value(i, 0) = acc;
  }
  n.op = Op::kKlDiagRows;
  n.a = mu1;
  n.b = s1;
  n.c = mu2;
  n.d = s2;
  n.needs_grad = at(mu1).needs_grad || at(s1).needs_grad ||
                 at(mu2).needs_grad || at(s2).needs_grad;
  return push(std::move(n));
}

void Tape::accumulate(Id id, const Mat& g) {
  Node& n = at(id);
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Mat Tape::grad(Id id) const {
  const Node& n = at(id);
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Id out) {
  Node& o = at(out);
  require(o.needs_grad, "backward: output does not depend on any gradient leaf");
  require_shape(o.value.rows() == 1 && o.value.cols() == 1,
                "backward: output must be scalar");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  o.grad = Mat::Constant(1, 1, 1.0);
  for (Id id = out; id >= 0; --id) backprop(id);
}

void Tape::backprop(Id id) {
  Node& n = at(id);
  if (!n.needs_grad || n.grad.size() == 0) return;
  const Mat& G = n.grad;
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kMatMul:
      if (at(n.a).needs_grad) accumulate(n.a, G * value(n.b).transpose());
      if (at(n.b).needs_grad) accumulate(n.b, value(n.a).transpose() * G);
      break;
    case Op::kMatMulNT:
      if (at(n.a).needs_grad) accumulate(n.a, G * value(n.b));
      if (at(n.b).needs_grad) accumulate(n.b, G.transpose() * value(n.a));
      break;
    case Op::kMatMulTN:
      if (at(n.a).needs_grad) accumulate(n.a, value(n.b) * G.transpose());
      if (at(n.b).needs_grad) accumulate(n.b, value(n.a) * G);
      break;
    case Op::kAdd:
      accumulate(n.a, G);
      accumulate(n.b, G);
      break;
    case Op::kSub:
      accumulate(n.a, G);
      if (at(n.b).needs_grad) accumulate(n.b, -G);
      break;
    case Op::kHadamard:
      if (at(n.a).needs_grad) accumulate(n.a, G.cwiseProduct(value(n.b)));
      if (at(n.b).needs_grad) accumulate(n.b, G.cwiseProduct(value(n.a)));
      break;
    case Op::kAddRow:
      accumulate(n.a, G);
      if (at(n.b).needs_grad) accumulate(n.b, G.colwise().sum());
      break;
    case Op::kMulRow: {
      if (at(n.a).needs_grad)
        accumulate(n.a, G.array().rowwise() * value(n.b).row(0).array());
      if (at(n.b).needs_grad)
        accumulate(n.b, G.cwiseProduct(value(n.a)).colwise().sum());
      break;
    }
    case Op::kScale:
      accumulate(n.a, G * n.s0);
      break;
    case Op::kIdentityMinus:
      accumulate(n.a, -G);
      break;
    case Op::kTranspose:
      accumulate(n.a, G.transpose());
      break;
    case Op::kGroupSort: {
      const Mat& A = value(n.a);
      Mat dA(A.rows(), A.cols());
      for (Index i = 0; i < A.rows(); ++i) {
        for (Index j = 0; j + 1 < A.cols(); j += 2) {
          // Ties route as identity, matching the forward branch.
          if (A(i, j) <= A(i, j + 1)) {
            dA(i, j) = G(i, j);
            dA(i, j + 1) = G(i, j + 1);
          } else {
            dA(i, j) = G(i, j + 1);
            dA(i, j + 1) = G(i, j);
          }
        }
      }
      accumulate(n.a, dA);
      break;
    }
    case Op::kRelu: {
      const Mat& A = value(n.a);
      accumulate(n.a, (A.array() > 0.0).cast<double>().matrix().cwiseProduct(G));
      break;
    }
    case Op::kSigmoid: {
      const Mat& Y = n.value;
      accumulate(n.a,
                 G.cwiseProduct(Y.cwiseProduct(Mat::Constant(Y.rows(), Y.cols(), 1.0) - Y)));
      break;
    }
    case Op::kClamp: {
      const Mat& A = value(n.a);
      Mat mask = ((A.array() >= n.s0) && (A.array() <= n.s1)).cast<double>();
      accumulate(n.a, G.cwiseProduct(mask));
      break;
    }
    case Op::kRowL2Norms: {
      const Mat& A = value(n.a);
      Mat dA = Mat::Zero(A.rows(), A.cols());
      for (Index i = 0; i < A.rows(); ++i) {
        const double nrm = n.value(i, 0);
        if (nrm > 0.0) dA.row(i) = (G(i, 0) / nrm) * A.row(i);
      }
      accumulate(n.a, dA);
      break;
    }
    case Op::kSumAll: {
      const Mat& A = value(n.a);
      accumulate(n.a, Mat::Constant(A.rows(), A.cols(), G(0, 0)));
      break;
    }
    case Op::kMeanAll: {
      const Mat& A = value(n.a);
      accumulate(n.a, Mat::Constant(A.rows(), A.cols(),
                                    G(0, 0) / static_cast<double>(A.size())));
      break;
    }
    case Op::kCbRows: {
      const Mat& L = value(n.a);
      const Mat& X = value(n.b);
      Mat dL(L.rows(), L.cols());
      for (Index i = 0; i < L.rows(); ++i)
        for (Index j = 0; j < L.cols(); ++j)
          dL(i, j) = G(i, 0) * cb_log_density_dlambda(X(i, j), L(i, j));
      accumulate(n.a, dL);
      break;
    }
    case Op::kKlStdRows: {
      const Mat& M = value(n.a);
      const Mat& S = value(n.b);
      if (at(n.a).needs_grad) {
        Mat dM(M.rows(), M.cols());
        for (Index i = 0; i < M.rows(); ++i)
          dM.row(i) = G(i, 0) * M.row(i);
        accumulate(n.a, dM);
      }
      if (at(n.b).needs_grad) {
        Mat dS(S.rows(), S.cols());
        for (Index i = 0; i < S.rows(); ++i)
          for (Index j = 0; j < S.cols(); ++j)
            dS(i, j) = G(i, 0) * (S(i, j) - 1.0 / S(i, j));
        accumulate(n.b, dS);
      }
      break;
    }
    case Op::kKlDiagRows: {
      const Mat& M1 = value(n.a);
      const Mat& S1 = value(n.b);
      const Mat& M2 = value(n.c);
      const Mat& S2 = value(n.d);
      const Index rows = M1.rows();
      const Index cols = M1.cols();
      Mat dM1, dS1, dM2, dS2;
      const bool g_m1 = at(n.a).needs_grad;
      const bool g_s1 = at(n.b).needs_grad;
      const bool g_m2 = at(n.c).needs_grad;
      const bool g_s2 = at(n.d).needs_grad;
      if (g_m1) dM1.setZero(rows, cols);
      if (g_s1) dS1.setZero(rows, cols);
      if (g_m2) dM2.setZero(rows, cols);
      if (g_s2) dS2.setZero(rows, cols);
      for (Index i = 0; i < rows; ++i) {
        const double g = G(i, 0);
        for (Index j = 0; j < cols; ++j) {
          const double dm = M1(i, j) - M2(i, j);
          const double a = S1(i, j);
          const double b = S2(i, j);
          const double b2 = b * b;
          if (g_m1) dM1(i, j) = g * dm / b2;
          if (g_m2) dM2(i, j) = -g * dm / b2;
          if (g_s1) dS1(i, j) = g * (a / b2 - 1.0 / a);
          if (g_s2) dS2(i, j) = g * (1.0 / b - (a * a + dm * dm) / (b2 * b));
        }
      }
      if (g_m1) accumulate(n.a, dM1);
      if (g_s1) accumulate(n.b, dS1);
      if (g_m2) accumulate(n.c, dM2);
      if (g_s2) accumulate(n.d, dS2);
      break;
    }
  }
}

}  // namespace lipvae
