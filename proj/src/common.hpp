#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace lipvae {

// Dense storage is row-major throughout; vectors are contiguous columns.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

// Error taxonomy used across the library.  The C boundary maps each type to a
// status code, so keep throws specific.
struct shape_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct not_certifiable_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_shape(bool cond, const std::string& msg) {
  if (!cond) throw shape_error(msg);
}

}  // namespace lipvae
