#include "tape.hpp"

#include "cont_bernoulli.hpp"
#include "numerics.hpp"
#include "test_util.hpp"
#include "vae.hpp"

#include "doctest.h"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

using namespace lipvae;

namespace {

Vec flatten(const Mat& m) {
  Vec v(m.size());
  Index k = 0;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) v[k++] = m(i, j);
  return v;
}

Mat unflatten(const Vec& v, Index rows, Index cols) {
  Mat m(rows, cols);
  Index k = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = v[k++];
  return m;
}

// Builds the graph for one differentiable input and reduces to a scalar via
// sum_all; used both for the tape value and for the finite-difference twin.
using Builder = std::function<Tape::Id(Tape&, Tape::Id)>;

void check_input_gradient(const std::string& label, const Mat& x0,
                          const Builder& build, double tol = 1e-5) {
  CAPTURE(label);
  Tape t;
  Tape::Id x = t.input(x0, true);
  Tape::Id out = t.sum_all(build(t, x));
  t.backward(out);
  Mat got = t.grad(x);
  REQUIRE(got.rows() == x0.rows());
  REQUIRE(got.cols() == x0.cols());

  auto f = [&](const Vec& v) {
    Tape tt;
    Tape::Id xx = tt.input(unflatten(v, x0.rows(), x0.cols()), false);
    return tt.value(tt.sum_all(build(tt, xx)))(0, 0);
  };
  Vec fd = finite_diff_grad(f, flatten(x0), 1e-6);
  Mat fdm = unflatten(fd, x0.rows(), x0.cols());
  CHECK((got - fdm).cwiseAbs().maxCoeff() <= tol);
}

}  // namespace

TEST_CASE("values of the core operations match direct computation") {
  SeededRng rng(31);
  Mat a = rng.uniform_mat(3, 4, -1.0, 1.0);
  Mat b = rng.uniform_mat(4, 2, -1.0, 1.0);
  Mat c = rng.uniform_mat(3, 4, -1.0, 1.0);
  Tape t;
  Tape::Id ia = t.constant(a), ib = t.constant(b), ic = t.constant(c);
  CHECK(t.value(t.matmul(ia, ib)).isApprox(Mat(a * b), 1e-14));
  CHECK(t.value(t.matmul_nt(ia, ic)).isApprox(Mat(a * c.transpose()), 1e-14));
  CHECK(t.value(t.matmul_tn(ia, ic)).isApprox(Mat(a.transpose() * c), 1e-14));
  CHECK(t.value(t.add(ia, ic)) == Mat(a + c));
  CHECK(t.value(t.sub(ia, ic)) == Mat(a - c));
  CHECK(t.value(t.hadamard(ia, ic)) == Mat(a.cwiseProduct(c)));
  CHECK(t.value(t.scale(ia, -2.5)) == Mat(-2.5 * a));
  CHECK(t.value(t.transpose(ia)) == Mat(a.transpose()));
  CHECK(t.value(t.sum_all(ia))(0, 0) == doctest::Approx(a.sum()).epsilon(1e-14));
  CHECK(t.value(t.mean_all(ia))(0, 0) ==
        doctest::Approx(a.mean()).epsilon(1e-14));

  Mat sq = rng.uniform_mat(3, 3, -1.0, 1.0);
  Tape::Id isq = t.constant(sq);
  CHECK(t.value(t.identity_minus(isq))
            .isApprox(Mat(Mat::Identity(3, 3) - sq), 1e-14));

  Mat row = rng.uniform_mat(1, 4, -1.0, 1.0);
  Tape::Id irow = t.constant(row);
  Mat want_add = a;
  want_add.rowwise() += row.row(0);
  CHECK(t.value(t.add_row(ia, irow)) == want_add);
  Mat want_mul = a;
  for (Index i = 0; i < a.rows(); ++i)
    want_mul.row(i) = a.row(i).cwiseProduct(row.row(0));
  CHECK(t.value(t.mul_row(ia, irow)) == want_mul);

  CHECK(t.value(t.row_l2_norms(ia)).col(0).isApprox(row_l2_norms(a), 1e-14));
}

TEST_CASE("group_sort_pairs sorts consecutive column pairs per row") {
  Mat m(2, 4);
  m << 3.0, 1.0, 2.0, 4.0,
      -1.0, -2.0, 0.5, 0.5;
  Tape t;
  Mat got = t.value(t.group_sort_pairs(t.constant(m)));
  Mat want(2, 4);
  want << 1.0, 3.0, 2.0, 4.0,
      -2.0, -1.0, 0.5, 0.5;
  CHECK(got == want);
}

TEST_CASE("input gradients match finite differences for every operation") {
  SeededRng rng(32);
  Mat x34 = rng.uniform_mat(3, 4, -0.9, 0.9);
  // Keep clamp and relu away from their kinks and pairs away from ties.
  for (Index i = 0; i < x34.size(); ++i) {
    double& v = x34.data()[i];
    if (std::abs(v) < 0.05) v += 0.1;
    if (std::abs(std::abs(v) - 0.5) < 0.05) v += 0.1;
  }
  Mat w42 = rng.uniform_mat(4, 2, -1.0, 1.0);
  Mat y34 = rng.uniform_mat(3, 4, -1.0, 1.0);
  Mat row14 = rng.uniform_mat(1, 4, 0.2, 1.0);
  Mat x33 = rng.uniform_mat(3, 3, -1.0, 1.0);

  check_input_gradient("matmul lhs", x34, [&](Tape& t, Tape::Id x) {
    return t.matmul(x, t.constant(w42));
  });
  check_input_gradient("matmul rhs", w42, [&](Tape& t, Tape::Id x) {
    return t.matmul(t.constant(x34), x);
  });
  check_input_gradient("matmul_nt", x34, [&](Tape& t, Tape::Id x) {
    return t.matmul_nt(x, t.constant(y34));
  });
  check_input_gradient("matmul_tn", x34, [&](Tape& t, Tape::Id x) {
    return t.matmul_tn(x, t.constant(y34));
  });
  check_input_gradient("add", x34, [&](Tape& t, Tape::Id x) {
    return t.add(x, t.constant(y34));
  });
  check_input_gradient("sub", x34, [&](Tape& t, Tape::Id x) {
    return t.sub(t.constant(y34), x);
  });
  check_input_gradient("hadamard", x34, [&](Tape& t, Tape::Id x) {
    return t.hadamard(x, t.constant(y34));
  });
  check_input_gradient("add_row base", x34, [&](Tape& t, Tape::Id x) {
    return t.add_row(x, t.constant(row14));
  });
  check_input_gradient("add_row row", row14, [&](Tape& t, Tape::Id x) {
    return t.add_row(t.constant(x34), x);
  });
  check_input_gradient("mul_row base", x34, [&](Tape& t, Tape::Id x) {
    return t.mul_row(x, t.constant(row14));
  });
  check_input_gradient("mul_row row", row14, [&](Tape& t, Tape::Id x) {
    return t.mul_row(t.constant(x34), x);
  });
  check_input_gradient("scale", x34, [&](Tape& t, Tape::Id x) {
    return t.scale(x, -1.7);
  });
  check_input_gradient("identity_minus", x33, [&](Tape& t, Tape::Id x) {
    return t.hadamard(t.identity_minus(x), t.constant(x33));
  });
  check_input_gradient("transpose", x34, [&](Tape& t, Tape::Id x) {
    return t.matmul(t.transpose(x), t.constant(y34));
  });
  check_input_gradient("group_sort_pairs", x34, [&](Tape& t, Tape::Id x) {
    return t.hadamard(t.group_sort_pairs(x), t.constant(y34));
  });
  check_input_gradient("relu", x34, [&](Tape& t, Tape::Id x) {
    return t.relu(x);
  });
  check_input_gradient("sigmoid", x34, [&](Tape& t, Tape::Id x) {
    return t.sigmoid(x);
  });
  check_input_gradient("clamp", x34, [&](Tape& t, Tape::Id x) {
    return t.clamp(x, -0.5, 0.5);
  });
  check_input_gradient("row_l2_norms", x34, [&](Tape& t, Tape::Id x) {
    return t.row_l2_norms(x);
  });
  check_input_gradient("mean_all", x34, [&](Tape& t, Tape::Id x) {
    return t.mean_all(x);
  });
}

TEST_CASE("likelihood and divergence rows differentiate correctly") {
  SeededRng rng(33);
  Mat lam = rng.uniform_mat(3, 5, 0.15, 0.85);
  Mat xdat = rng.uniform_mat(3, 5, 0.0, 1.0);
  Mat mu = rng.uniform_mat(3, 4, -1.0, 1.0);
  Mat sg = rng.uniform_mat(3, 4, 0.3, 1.4);
  Mat mu2 = rng.uniform_mat(3, 4, -1.0, 1.0);
  Mat sg2 = rng.uniform_mat(3, 4, 0.3, 1.4);

  check_input_gradient("cb rows lambda", lam, [&](Tape& t, Tape::Id x) {
    return t.cb_log_likelihood_rows(x, t.constant(xdat));
  });
  check_input_gradient("kl_std mu", mu, [&](Tape& t, Tape::Id x) {
    return t.kl_std_normal_rows(x, t.constant(sg));
  });
  check_input_gradient("kl_std sigma", sg, [&](Tape& t, Tape::Id x) {
    return t.kl_std_normal_rows(t.constant(mu), x);
  });
  check_input_gradient("kl_diag mu1", mu, [&](Tape& t, Tape::Id x) {
    return t.kl_diag_gaussian_rows(x, t.constant(sg), t.constant(mu2),
                                   t.constant(sg2));
  });
  check_input_gradient("kl_diag s1", sg, [&](Tape& t, Tape::Id x) {
    return t.kl_diag_gaussian_rows(t.constant(mu), x, t.constant(mu2),
                                   t.constant(sg2));
  });
  check_input_gradient("kl_diag mu2", mu2, [&](Tape& t, Tape::Id x) {
    return t.kl_diag_gaussian_rows(t.constant(mu), t.constant(sg), x,
                                   t.constant(sg2));
  });
  check_input_gradient("kl_diag s2", sg2, [&](Tape& t, Tape::Id x) {
    return t.kl_diag_gaussian_rows(t.constant(mu), t.constant(sg),
                                   t.constant(mu2), x);
  });

  // Row values agree with the scalar reference implementations.
  Tape t;
  Mat kl = t.value(t.kl_std_normal_rows(t.constant(mu), t.constant(sg)));
  Mat kld = t.value(t.kl_diag_gaussian_rows(
      t.constant(mu), t.constant(sg), t.constant(mu2), t.constant(sg2)));
  Mat cb = t.value(t.cb_log_likelihood_rows(t.constant(lam), t.constant(xdat)));
  for (Index i = 0; i < 3; ++i) {
    CHECK(kl(i, 0) == doctest::Approx(kl_to_std_normal(
                          mu.row(i).transpose(), sg.row(i).transpose()))
                          .epsilon(1e-13));
    CHECK(kld(i, 0) ==
          doctest::Approx(kl_diag_gaussians(
                              mu.row(i).transpose(), sg.row(i).transpose(),
                              mu2.row(i).transpose(), sg2.row(i).transpose()))
              .epsilon(1e-13));
    CHECK(cb(i, 0) == doctest::Approx(cb_log_likelihood(
                          xdat.row(i).transpose(), lam.row(i).transpose()))
                          .epsilon(1e-13));
  }
}

TEST_CASE("gradients only flow to nodes that require them") {
  Tape t;
  Mat a = Mat::Constant(2, 2, 1.0);
  Tape::Id x = t.input(a, true);
  Tape::Id k = t.constant(a);
  Tape::Id out = t.sum_all(t.hadamard(x, k));
  CHECK(t.requires_grad(x));
  CHECK(!t.requires_grad(k));
  CHECK(t.requires_grad(out));
  t.backward(out);
  CHECK(t.grad(x) == Mat(Mat::Constant(2, 2, 1.0)));
  CHECK(t.grad(k) == Mat(Mat::Zero(2, 2)));
}

TEST_CASE("backward resets accumulators between calls") {
  Tape t;
  Tape::Id x = t.input(Mat::Constant(1, 3, 2.0), true);
  Tape::Id out = t.sum_all(t.hadamard(x, x));
  t.backward(out);
  Mat g1 = t.grad(x);
  t.backward(out);
  CHECK(t.grad(x) == g1);
  CHECK(g1 == Mat(Mat::Constant(1, 3, 4.0)));
}

TEST_CASE("backward requires a scalar start node") {
  Tape t;
  Tape::Id x = t.input(Mat::Constant(2, 2, 1.0), true);
  CHECK_THROWS_AS(t.backward(x), shape_error);
}

TEST_CASE("shape mismatches are hard errors") {
  Tape t;
  Tape::Id a = t.constant(Mat::Zero(2, 3));
  Tape::Id b = t.constant(Mat::Zero(2, 2));
  CHECK_THROWS_AS((void)t.matmul(a, b), shape_error);
  CHECK_THROWS_AS((void)t.add(a, b), shape_error);
  CHECK_THROWS_AS((void)t.hadamard(a, b), shape_error);
  CHECK_THROWS_AS((void)t.identity_minus(a), shape_error);
  CHECK_THROWS_AS((void)t.group_sort_pairs(t.constant(Mat::Zero(2, 5))),
                  shape_error);
  CHECK_THROWS_AS((void)t.add_row(a, t.constant(Mat::Zero(1, 2))), shape_error);
}
