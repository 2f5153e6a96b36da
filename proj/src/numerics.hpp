#pragma once

#include "common.hpp"

#include <cstdint>
#include <functional>

namespace lipvae {

// Pairwise summation over power-of-two blocks.  Block boundaries always fall
// on even offsets, so swapping the two elements of any aligned pair cannot
// change the result; GroupSort relies on that when we assert exact norm
// preservation.
double sum_pairwise(const double* x, std::size_t n);

double l2_norm(const double* x, std::size_t n);
double l2_norm(const Vec& v);
// Row-wise norms of a matrix, one value per row.
Vec row_l2_norms(const Mat& m);

// Counter-based generator: output i is a fixed mix of (key, i), so substreams
// can be derived without consuming state and parallel consumers stay
// reproducible regardless of scheduling.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform01();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();  // N(0, 1)

  Vec normal_vec(Index n);
  Mat normal_mat(Index rows, Index cols);
  Vec uniform_vec(Index n, double lo, double hi);
  Mat uniform_mat(Index rows, Index cols, double lo, double hi);

  // Independent stream derived from the key alone; unaffected by how many
  // values this generator has produced.
  SeededRng substream(std::uint64_t stream) const;

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Central differences, step h per coordinate.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x,
                     double h);

}  // namespace lipvae
