#pragma once

#include "msgr/data_model.hpp"

#include <vector>

namespace msgr {

/// Modified squared-exponential kernel exp{-a(|s|^2 + |t|^2) - b|s - t|^2}.
double mse_kernel(const Point& s, const Point& t, double a_gp, double b_gp);

/// Kernel matrix over the rows of `locations`.
Matrix mse_kernel_matrix(const Eigen::MatrixX2d& locations, double a_gp, double b_gp);

/// 1-D Mercer eigenpairs of exp{-a(x^2 + y^2) - b(x - y)^2} under Lebesgue measure.
///
/// With c = sqrt(a^2 + 2ab) and A = a + b + c the eigenvalues are
/// sqrt(pi/A) (b/A)^l and the orthonormal eigenfunctions are
/// (2c/pi)^{1/4} exp(-c x^2) H_l(sqrt(2c) x) / sqrt(2^l l!),
/// so that sum_l eta_l psi_l(x) psi_l(y) reproduces the kernel.
class HermiteEigenbasis1D {
 public:
  HermiteEigenbasis1D(double a_gp, double b_gp, int max_degree);

  int max_degree() const { return max_degree_; }
  double c() const { return c_; }
  double ratio() const { return ratio_; }  // eta_{l+1} / eta_l = b / A
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }

  /// psi_0(x) .. psi_max(x), evaluated with the normalized Hermite recurrence.
  std::vector<double> eigenfunctions(double x) const;

 private:
  double a_, b_, c_, ratio_;
  int max_degree_;
  std::vector<double> eigenvalues_;
};

struct EigenPair1D {
  int index = 0;
  double eigenvalue = 0.0;
  double a_gp = 0.0, b_gp = 0.0, c = 0.0;
};

std::vector<EigenPair1D> eigenpairs_1d(double a_gp, double b_gp, int max_degree);

/// Tensor-product Karhunen-Loeve basis of the 2-D kernel, truncated at total degree.
///
/// `basis_matrices[k](n, l) = sqrt(eta_l) psi_l(s_n)` is the matrix B^k; the
/// companion `eigenfunction_matrices[k]` holds psi_l(s_n) without the sqrt(eta_l)
/// weight. Both are empty in a skeleton returned by eigenpairs_2d.
struct GPBasis {
  double a_gp = 0.0, b_gp = 0.0;
  int degree = 0;
  Vector eigenvalues;           // length L, descending
  Eigen::MatrixX2i pair_indices;  // L x 2 per-axis degrees
  std::vector<Matrix> basis_matrices;
  std::vector<Matrix> eigenfunction_matrices;
  std::vector<double> sup_norms;  // a_k = max |B^k|

  int size() const { return static_cast<int>(eigenvalues.size()); }

  /// psi_l(s) for all l at a single location.
  Vector eigenfunctions_at(const Point& s) const;
  /// B_l(s) = sqrt(eta_l) psi_l(s) at a single location.
  Vector basis_at(const Point& s) const;
};

GPBasis eigenpairs_2d(double a_gp, double b_gp, int degree);

/// Fills basis and eigenfunction matrices for every FOV of a scaled dataset.
GPBasis evaluate_basis(const SpatialDataset& scaled, GPBasis skeleton);

/// Diagnostic dump of B^k with a header `cell_id,b1..bL`.
void write_basis_csv(const GPBasis& basis, const SpatialDataset& scaled, int fov_index,
                     const std::filesystem::path& path);

}  // namespace msgr
