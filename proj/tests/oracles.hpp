#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner. Nothing here calls into the library under test except
// the kernel itself.

#include "msgr/data_model.hpp"
#include "msgr/gp_basis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace msgr::oracle {

/// Eigenvalues (descending) of the 1-D kernel operator, by the Nystrom method
/// on `n` equally spaced points over [-half_width, half_width].
inline Vector nystrom_eigenvalues(double a_gp, double b_gp, double half_width, int n) {
  const double h = 2.0 * half_width / (n - 1);
  Matrix k(n, n);
  for (int i = 0; i < n; ++i) {
    const double x = -half_width + h * i;
    for (int j = 0; j < n; ++j) {
      const double y = -half_width + h * j;
      k(i, j) = std::exp(-a_gp * (x * x + y * y) - b_gp * (x - y) * (x - y)) * h;
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(k, Eigen::EigenvaluesOnly);
  Vector ev = eig.eigenvalues().reverse();
  return ev;
}

/// Composite Simpson rule on [lo, hi] with an even number of intervals.
inline double simpson(const std::function<double(double)>& f, double lo, double hi, int intervals) {
  if (intervals % 2) ++intervals;
  const double h = (hi - lo) / intervals;
  double s = f(lo) + f(hi);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + h * i);
  return s * h / 3.0;
}

/// Solves A x = b with a full-pivot LU (independent of the library's Cholesky path).
inline Vector dense_solve(const Matrix& a, const Vector& b) { return a.fullPivLu().solve(b); }
inline Matrix dense_inverse(const Matrix& a) { return a.fullPivLu().inverse(); }

/// Kronecker product A (x) B.
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Matthews correlation coefficient straight from its definition.
inline double mcc(double tp, double fp, double tn, double fn) {
  const double d = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  return d > 0.0 ? (tp * tn - fp * fn) / std::sqrt(d) : 0.0;
}

/// Relative Frobenius error of B B' against the kernel matrix of `locations`.
inline double reconstruction_error(const Matrix& basis_matrix, const Eigen::MatrixX2d& locations, double a_gp,
                                   double b_gp) {
  const auto n = locations.rows();
  Matrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d2 = (locations.row(i) - locations.row(j)).squaredNorm();
      k(i, j) = std::exp(-a_gp * (locations.row(i).squaredNorm() + locations.row(j).squaredNorm()) - b_gp * d2);
    }
  return (basis_matrix * basis_matrix.transpose() - k).norm() / k.norm();
}

}  // namespace msgr::oracle
