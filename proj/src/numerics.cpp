#include "numerics.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace lipvae {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t kStep = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kStream = 0xd1342543de82ef95ULL;

}  // namespace

double sum_pairwise(const double* x, std::size_t n) {
  if (n == 0) return 0.0;
  if (n == 1) return x[0];
  if (n == 2) return x[0] + x[1];
  // Largest power of two strictly below n keeps every split on an even offset.
  std::size_t half = 1;
  while (half * 2 < n) half *= 2;
  return sum_pairwise(x, half) + sum_pairwise(x + half, n - half);
}

double l2_norm(const double* x, std::size_t n) {
  if (n == 0) return 0.0;
  double acc = 0.0;
  // Reuse the pairwise scheme on squares without materialising them.
  if (n <= 32) {
    std::array<double, 32> sq;
    for (std::size_t i = 0; i < n; ++i) sq[i] = x[i] * x[i];
    acc = sum_pairwise(sq.data(), n);
  } else {
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = x[i] * x[i];
    acc = sum_pairwise(sq.data(), n);
  }
  return std::sqrt(acc);
}

double l2_norm(const Vec& v) {
  return l2_norm(v.data(), static_cast<std::size_t>(v.size()));
}

Vec row_l2_norms(const Mat& m) {
  Vec out(m.rows());
  for (Index i = 0; i < m.rows(); ++i)
    out[i] = l2_norm(m.data() + i * m.cols(), static_cast<std::size_t>(m.cols()));
  return out;
}

SeededRng::SeededRng(std::uint64_t seed) : key_(mix64(seed + kStep)) {}

std::uint64_t SeededRng::next_u64() {
  ++counter_;
  return mix64(key_ + kStep * counter_);
}

double SeededRng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

double SeededRng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * M_PI * u2;
  spare_ = mag * std::sin(ang);
  have_spare_ = true;
  return mag * std::cos(ang);
}

Vec SeededRng::normal_vec(Index n) {
  require(n >= 1, "normal_vec: need at least one draw");
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal();
  return v;
}

Mat SeededRng::normal_mat(Index rows, Index cols) {
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = normal();
  return m;
}

Vec SeededRng::uniform_vec(Index n, double lo, double hi) {
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
  return v;
}

Mat SeededRng::uniform_mat(Index rows, Index cols, double lo, double hi) {
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = uniform(lo, hi);
  return m;
}

SeededRng SeededRng::substream(std::uint64_t stream) const {
  SeededRng child(0);
  child.key_ = mix64(key_ ^ (kStream * (stream + 1)));
  child.counter_ = 0;
  child.have_spare_ = false;
  return child;
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x,
                     double h) {
  require(h > 0.0, "finite_diff_grad: step must be positive");
  Vec g(x.size());
  Vec p = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    p[i] = xi + h;
    const double fp = f(p);
    p[i] = xi - h;
    const double fm = f(p);
    p[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace lipvae
