#pragma once

#include "msgr/data_model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace msgr {

/// Prior on the selection latents Lambda_i ~ MN(M_i, U, sigma_lambda_sq * V).
struct FovPrior {
  Matrix V;                   // K x K unit-diagonal FOV correlation
  double sigma_lambda_sq = 1.0 / 50.0;
  std::vector<Matrix> M;      // per node, K x (p-1); empty means all zero
  double default_mean = 0.0;  // used when M is empty
  Matrix U;                   // (p-1) x (p-1)
  // Filled by prepare(): V = V_basis diag(V_spectrum) V_basis'.
  Matrix V_inv;
  Matrix V_basis;
  Vector V_spectrum;
  Matrix U_inv;

  /// Derives the cached factorizations from V and U. Throws SingularPrior.
  void prepare();

  int num_fovs() const { return static_cast<int>(V.rows()); }
  /// Prior mean of Lambda_ij (a K-vector); `slot` indexes the p-1 predictors of node i.
  Vector mean(int node, int slot) const;
};

/// V[k,k'] = rho^{d_kk'}, zeroed across regions, PSD-repaired, unit diagonal.
/// `regions`, when given, holds one label per FOV index.
Matrix build_fov_correlation(const FovGeometry& geometry, double rho_decay,
                             const std::optional<std::vector<std::string>>& regions = std::nullopt);

/// Assembles V (from the dataset's region labels, if any), M and U.
FovPrior build_fov_prior(const SpatialDataset& dataset, const FovGeometry& geometry, const Hyperparams& hp);

/// Moran's I of `values` under symmetric weights (diagonal ignored).
double morans_i(const Vector& values, const Matrix& weights);

/// Moran's I of per-FOV mean expression with Gaussian-kernel weights, clamped to (0.01, 0.99).
double estimate_rho_decay(const SpatialDataset& dataset, const FovGeometry& geometry, double bandwidth = 1.0);

/// Pr(delta = 1) = Phi(m / sqrt(sigma_sq + 1)) for lambda ~ N(m, sigma_sq).
double marginal_inclusion_prob(double m, double sigma_sq);

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo estimate of E[Phi(lambda_1) Phi(lambda_2)] for lambda ~ N(mean, cov).
McEstimate joint_inclusion_prob(const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov, long n_mc,
                                std::uint64_t seed);

}  // namespace msgr
