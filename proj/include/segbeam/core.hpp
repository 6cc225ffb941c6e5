#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace segbeam {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;

// Audio and other channel-major real data: one row per channel.
using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = std::int64_t;

// Error taxonomy. Everything derives from Error so callers can catch broadly;
// the CLI maps ParameterError to exit code 2 and DataError/IoError to 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const auto v = m(r, c);
      if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Complex>) {
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
      } else {
        if (!std::isfinite(v)) return false;
      }
    }
  }
  return true;
}

inline double relative_frobenius(const CMatrix& a, const CMatrix& b) {
  const double denom = b.norm();
  return denom > 0.0 ? (a - b).norm() / denom : (a - b).norm();
}

}  // namespace detail

}  // namespace segbeam
