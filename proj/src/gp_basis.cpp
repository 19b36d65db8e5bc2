#include "msgr/gp_basis.hpp"

#include "msgr/csv.hpp"
#include "msgr/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <tuple>

namespace msgr {

double mse_kernel(const Point& s, const Point& t, double a_gp, double b_gp) {
  return std::exp(-a_gp * (s.squaredNorm() + t.squaredNorm()) - b_gp * (s - t).squaredNorm());
}

Matrix mse_kernel_matrix(const Eigen::MatrixX2d& locations, double a_gp, double b_gp) {
  const auto n = locations.rows();
  Matrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point si = locations.row(i).transpose();
    for (Eigen::Index j = 0; j <= i; ++j) {
      k(i, j) = k(j, i) = mse_kernel(si, locations.row(j).transpose(), a_gp, b_gp);
    }
  }
  return k;
}

HermiteEigenbasis1D::HermiteEigenbasis1D(double a_gp, double b_gp, int max_degree)
    : a_(a_gp), b_(b_gp), max_degree_(max_degree) {
  if (!(a_gp > 0.0) || !(b_gp > 0.0))
    throw config_error("InvalidShape", "analytic eigenpairs need a_gp > 0 and b_gp > 0");
  if (max_degree < 0) throw config_error("InvalidShape", "degree must be nonnegative");
  c_ = std::sqrt(a_ * a_ + 2.0 * a_ * b_);
  const double A = a_ + b_ + c_;
  ratio_ = b_ / A;
  eigenvalues_.resize(static_cast<std::size_t>(max_degree) + 1);
  double eta = std::sqrt(std::numbers::pi / A);
  for (auto& e : eigenvalues_) {
    e = eta;
    eta *= ratio_;
  }
}

std::vector<double> HermiteEigenbasis1D::eigenfunctions(double x) const {
  std::vector<double> psi(static_cast<std::size_t>(max_degree_) + 1);
  const double t = std::sqrt(2.0 * c_) * x;
  const double envelope = std::pow(2.0 * c_ / std::numbers::pi, 0.25) * std::exp(-c_ * x * x);
  // h_l = H_l(t) / sqrt(2^l l!)
  double h_prev = 1.0;
  double h = std::sqrt(2.0) * t;
  psi[0] = envelope;
  if (max_degree_ >= 1) psi[1] = envelope * h;
  for (int l = 1; l < max_degree_; ++l) {
    const double next = std::sqrt(2.0 / (l + 1)) * t * h - std::sqrt(static_cast<double>(l) / (l + 1)) * h_prev;
    h_prev = h;
    h = next;
    psi[l + 1] = envelope * h;
  }
  return psi;
}

std::vector<EigenPair1D> eigenpairs_1d(double a_gp, double b_gp, int max_degree) {
  HermiteEigenbasis1D basis(a_gp, b_gp, max_degree);
  std::vector<EigenPair1D> out;
  for (int l = 0; l <= max_degree; ++l)
    out.push_back({l, basis.eigenvalues()[l], a_gp, b_gp, basis.c()});
  return out;
}

GPBasis eigenpairs_2d(double a_gp, double b_gp, int degree) {
  HermiteEigenbasis1D basis(a_gp, b_gp, degree);
  const auto& eta = basis.eigenvalues();
  // eta_{l1} eta_{l2} = (pi/A) r^{l1+l2}, so sorting by total degree is the
  // descending-eigenvalue order with exact ties inside each degree.
  std::vector<std::tuple<int, int, int>> order;
  for (int l1 = 0; l1 <= degree; ++l1)
    for (int l2 = 0; l1 + l2 <= degree; ++l2) order.emplace_back(l1 + l2, l1, l2);
  std::sort(order.begin(), order.end());

  GPBasis g;
  g.a_gp = a_gp;
  g.b_gp = b_gp;
  g.degree = degree;
  const auto L = static_cast<Eigen::Index>(order.size());
  g.eigenvalues.resize(L);
  g.pair_indices.resize(L, 2);
  for (Eigen::Index l = 0; l < L; ++l) {
    auto [total, l1, l2] = order[l];
    (void)total;
    g.pair_indices(l, 0) = l1;
    g.pair_indices(l, 1) = l2;
    g.eigenvalues(l) = eta[l1] * eta[l2];
  }
  return g;
}

Vector GPBasis::eigenfunctions_at(const Point& s) const {
  HermiteEigenbasis1D basis(a_gp, b_gp, degree);
  const auto px = basis.eigenfunctions(s.x());
  const auto py = basis.eigenfunctions(s.y());
  Vector out(size());
  for (int l = 0; l < size(); ++l) out(l) = px[pair_indices(l, 0)] * py[pair_indices(l, 1)];
  return out;
}

Vector GPBasis::basis_at(const Point& s) const {
  return eigenfunctions_at(s).cwiseProduct(eigenvalues.cwiseSqrt());
}

GPBasis evaluate_basis(const SpatialDataset& scaled, GPBasis skeleton) {
  HermiteEigenbasis1D basis(skeleton.a_gp, skeleton.b_gp, skeleton.degree);
  const int L = skeleton.size();
  const Vector root_eta = skeleton.eigenvalues.cwiseSqrt();
  skeleton.basis_matrices.clear();
  skeleton.eigenfunction_matrices.clear();
  skeleton.sup_norms.clear();
  for (const auto& fov : scaled.fovs) {
    const auto n = fov.num_cells();
    Matrix psi(n, L);
    for (Eigen::Index c = 0; c < n; ++c) {
      const auto px = basis.eigenfunctions(fov.coordinates(c, 0));
      const auto py = basis.eigenfunctions(fov.coordinates(c, 1));
      for (int l = 0; l < L; ++l) {
        const double v = px[skeleton.pair_indices(l, 0)] * py[skeleton.pair_indices(l, 1)];
        if (!std::isfinite(v))
          throw numerical_error("NonFiniteBasis", "fov " + std::to_string(fov.fov_id) + " cell " +
                                                      std::to_string(fov.cell_ids.at(c)) + " basis " +
                                                      std::to_string(l));
        psi(c, l) = v;
      }
    }
    Matrix b = psi * root_eta.asDiagonal();
    skeleton.sup_norms.push_back(b.cwiseAbs().maxCoeff());
    skeleton.basis_matrices.push_back(std::move(b));
    skeleton.eigenfunction_matrices.push_back(std::move(psi));
  }
  return skeleton;
}

void write_basis_csv(const GPBasis& basis, const SpatialDataset& scaled, int fov_index,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw data_error("IoError", "cannot write " + path.string());
  const auto& b = basis.basis_matrices.at(fov_index);
  out << "cell_id";
  for (int l = 0; l < basis.size(); ++l) out << ",b" << l + 1;
  out << '\n';
  for (Eigen::Index n = 0; n < b.rows(); ++n) {
    out << scaled.fovs[fov_index].cell_ids[n];
    for (int l = 0; l < basis.size(); ++l) out << ',' << csv::format(b(n, l));
    out << '\n';
  }
}

}  // namespace msgr
