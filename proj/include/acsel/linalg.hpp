#pragma once

#include <acsel/error.hpp>

#include <Eigen/Dense>

namespace acsel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SpdSolution {
  Matrix x;
  /// True when the plain Cholesky factorisation failed and the ridge was used.
  bool regularized = false;
};

/// Ridge added after a failed factorisation, relative to the mean diagonal.
inline constexpr double kRidgeScale = 1e-8;

/// Solves A x = b for symmetric A by Cholesky. If the factorisation fails,
/// retries once with A + 1e-8 * tr(A)/dim * I and flags the result.
inline SpdSolution solve_spd(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || a.rows() != b.rows())
    throw DimensionMismatch("solve_spd: incompatible dimensions");
  if (a.rows() == 0) return {Matrix(0, b.cols()), false};
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return {llt.solve(b), false};
  const double ridge = kRidgeScale * a.trace() / static_cast<double>(a.rows());
  Matrix reg = a;
  reg.diagonal().array() += ridge;
  Eigen::LLT<Matrix> llt2(reg);
  if (llt2.info() != Eigen::Success || !(ridge > 0.0)) {
    Eigen::JacobiSVD<Matrix> svd(a);
    const auto& s = svd.singularValues();
    const double cond = s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1)
                                              : std::numeric_limits<double>::infinity();
    throw SingularMatrix("matrix is not positive definite even after ridge", cond);
  }
  return {llt2.solve(b), true};
}

inline SpdSolution solve_spd(const Matrix& a, const Vector& b) {
  return solve_spd(a, Matrix(b));
}

/// 2-norm condition number of a square matrix.
inline double condition_number(const Matrix& a) {
  if (a.size() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  return s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
}

}  // namespace acsel
