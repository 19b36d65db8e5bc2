#pragma once

#include "msgr/data_model.hpp"
#include "msgr/gp_basis.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace msgr::test {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("msgr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = n(rng);
  return m;
}

// One-FOV-per-entry dataset with the given coordinates and expression.
inline SpatialDataset make_dataset(const std::vector<Eigen::MatrixX2d>& coords, const std::vector<Matrix>& expr) {
  SpatialDataset d;
  const auto p = expr.front().cols();
  for (Eigen::Index g = 0; g < p; ++g) d.gene_names.push_back("g" + std::to_string(g + 1));
  std::int64_t id = 1;
  for (std::size_t k = 0; k < coords.size(); ++k) {
    FovBlock f;
    f.fov_id = static_cast<int>(k) + 1;
    f.coordinates = coords[k];
    f.expression = expr[k];
    f.centroid = coords[k].colwise().mean().transpose();
    for (Eigen::Index n = 0; n < coords[k].rows(); ++n) f.cell_ids.push_back(id++);
    d.fovs.push_back(std::move(f));
  }
  return d;
}

// Basis with arbitrary eigenfunction matrices (one per FOV) and eigenvalues.
inline GPBasis hand_basis(const std::vector<Matrix>& psi, const Vector& eta) {
  GPBasis b;
  b.a_gp = 0.5;
  b.b_gp = 0.5;
  b.eigenvalues = eta;
  b.pair_indices = Eigen::MatrixX2i::Zero(eta.size(), 2);
  for (const auto& m : psi) {
    b.eigenfunction_matrices.push_back(m);
    b.basis_matrices.push_back(m * eta.cwiseSqrt().asDiagonal());
    b.sup_norms.push_back(b.basis_matrices.back().cwiseAbs().maxCoeff());
  }
  return b;
}

inline double relative_frobenius(const Matrix& approx, const Matrix& exact) {
  return (approx - exact).norm() / exact.norm();
}

}  // namespace msgr::test
