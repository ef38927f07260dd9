#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace bssad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Malformed or inconsistent input data (files, shapes, labels).
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or violated call precondition.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown (non-finite loss, singular matrices).
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

/// Clamp negative eigenvalues of a symmetric matrix to zero.
inline Matrix clamp_psd(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(a));
  Vector vals = eig.eigenvalues().cwiseMax(0.0);
  return symmetrize(eig.eigenvectors() * vals.asDiagonal() *
                    eig.eigenvectors().transpose());
}

/// Symmetric square root of a PSD matrix; negative eigenvalues are clamped
/// so exact-zero covariances yield an exact-zero factor.
inline Matrix psd_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(a));
  Vector vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return symmetrize(eig.eigenvectors() * vals.asDiagonal() *
                    eig.eigenvectors().transpose());
}

/// Sample covariance of row-wise observations, mean-subtracted, divisor N-1.
inline Matrix sample_covariance(const Matrix& rows) {
  if (rows.rows() < 2) {
    throw data_error("sample_covariance: need at least 2 observations");
  }
  Matrix centered = rows.rowwise() - rows.colwise().mean();
  return Matrix(centered.transpose() * centered / double(rows.rows() - 1));
}

/// Shortest decimal representation that round-trips the exact double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace bssad
