#pragma once

#include "msgr/data_model.hpp"
#include "msgr/vb_engine.hpp"

#include <filesystem>
#include <utility>
#include <vector>

namespace msgr {

using EdgeList = std::vector<std::pair<int, int>>;  // (i, j) with i < j

/// Symmetrized coefficients of one selected edge, on the basis B (not psi).
struct EdgeCoefficients {
  int fov = 0;  // FOV index k
  int i = 0, j = 0;
  Vector u;  // u_hat_ij^k = u_hat_ji^k
};

/// Post-processed network estimate.
///
/// Sign convention: omega_ij(s) = -sum_l u_hat_l B_l(s), since u_hat carries the
/// E(omega_ii) factor and gamma_ij = -omega_ij / omega_ii.
struct NetworkEstimate {
  std::vector<std::string> gene_names;
  std::vector<int> fov_ids;
  std::vector<Matrix> pip;  // per FOV, p x p, symmetric, zero diagonal
  double kappa = 0.0;
  double alpha = 0.0;
  std::vector<EdgeList> edges;  // per FOV
  std::vector<EdgeCoefficients> coefficients;  // one per selected (k, i, j), in edge order
  Matrix omega_diag;  // p x K posterior means E(omega_ii^k)

  int num_genes() const { return static_cast<int>(gene_names.size()); }
  int num_fovs() const { return static_cast<int>(fov_ids.size()); }
  /// Coefficients of edge (i, j) in FOV k, or nullptr when not selected.
  const EdgeCoefficients* find(int k, int i, int j) const;
};

/// p_hat_ij^k = min(p_ij^k, p_ji^k).
std::vector<Matrix> pip_matrix(const FitResult& fit);

/// Upper-triangle PIPs of every FOV, FOV-major.
std::vector<double> flatten_pips(const std::vector<Matrix>& pips);

/// Bayesian FDR threshold. Returns a value above 1 when nothing qualifies.
///
/// A tie block of PIPs straddling the cutoff is excluded as a whole, so that
/// selecting `pip >= kappa` keeps the mean local FDR of the selection <= alpha.
double bfdr_threshold(const std::vector<double>& pips, double alpha);

std::vector<EdgeList> select_edges(const std::vector<Matrix>& pips, double kappa);

/// u_tilde from both regressions; keeps the direction with the smaller l1 norm
/// (lower-index direction on ties).
std::vector<EdgeCoefficients> symmetrize_coefficients(const FitResult& fit, const std::vector<EdgeList>& edges);

/// Divides each edge by max(1, c_ik, c_jk) with c_ik = a_k sum_j |u_hat_ij^k|_1 / E(omega_ii^k),
/// which makes every assembled Omega(s) diagonally dominant.
void pd_rescale(std::vector<EdgeCoefficients>& coefficients, const std::vector<double>& sup_norms,
                const Matrix& omega_diag);

/// Posterior means E(omega_ii^k), p x K.
Matrix omega_diagonal(const FitResult& fit);

/// Full post-processing chain at level alpha.
NetworkEstimate postprocess(const FitResult& fit, double alpha);

struct EdgeSurface {
  Vector gamma, omega, rho;  // one entry per cell of the FOV
};

/// Surfaces of edge (i, j) in FOV k at the cells of the FOV. Unselected edges
/// give zero surfaces when `allow_unselected`, otherwise EdgeNotSelected.
EdgeSurface assemble_surfaces(const NetworkEstimate& estimate, const GPBasis& basis, int i, int j, int k,
                              bool allow_unselected = false);

/// Omega(s) at a location whose basis row (B_l(s), l = 1..L) is `basis_row`.
Matrix precision_at(const NetworkEstimate& estimate, int k, const Vector& basis_row);

/// degree(g, k): p x K.
Eigen::MatrixXi connectivity_degree(const NetworkEstimate& estimate);

/// 100 * selected edges within `subset` / C(|subset|, 2), per FOV.
Vector connectivity_score(const NetworkEstimate& estimate, const std::vector<int>& subset);

void write_edges_csv(const NetworkEstimate& estimate, const std::filesystem::path& path);
/// One `pip_fov<id>.csv` per FOV with gene-name header and row labels.
void write_pip_matrices(const NetworkEstimate& estimate, const std::filesystem::path& dir);
void write_degree_csv(const NetworkEstimate& estimate, const std::filesystem::path& path);
void write_cs_csv(const NetworkEstimate& estimate, const std::vector<std::pair<std::string, std::vector<int>>>& pathways,
                  const std::filesystem::path& path);
void write_surfaces_csv(const NetworkEstimate& estimate, const GPBasis& basis, const SpatialDataset& scaled,
                        const std::filesystem::path& path);

/// Reads an edge list written by write_edges_csv (or a truth file with at least
/// `fov,gene_i,gene_j`) as per-FOV pairs; FOV ids and gene names are mapped to indices.
std::vector<EdgeList> read_edges_csv(const std::filesystem::path& path, const std::vector<int>& fov_ids,
                                     const std::vector<std::string>& gene_names);

}  // namespace msgr
