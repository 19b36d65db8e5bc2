#include "msgr/priors.hpp"

#include "msgr/error.hpp"
#include "msgr/normal.hpp"
#include "msgr/rng.hpp"

#include <algorithm>
#include <cmath>

namespace msgr {

Vector FovPrior::mean(int node, int slot) const {
  if (M.empty()) return Vector::Constant(num_fovs(), default_mean);
  return M.at(node).col(slot);
}

void FovPrior::prepare() {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(V);
  V_basis = eig.eigenvectors();
  V_spectrum = eig.eigenvalues();
  // rho^d is PSD but can be numerically singular for near-duplicate centroids.
  if (!(V_spectrum.minCoeff() > 1e-10))
    throw numerical_error("SingularPrior", "FOV correlation matrix is not invertible");
  V_inv = V_basis * V_spectrum.cwiseInverse().asDiagonal() * V_basis.transpose();
  if (U.size() == 0) {
    U_inv.resize(0, 0);
    return;
  }
  Eigen::LLT<Matrix> u_llt(U);
  if (u_llt.info() != Eigen::Success) throw numerical_error("SingularPrior", "U is not positive definite");
  U_inv = u_llt.solve(Matrix::Identity(U.rows(), U.cols()));
}

Matrix build_fov_correlation(const FovGeometry& geometry, double rho_decay,
                             const std::optional<std::vector<std::string>>& regions) {
  if (!(rho_decay > 0.0 && rho_decay < 1.0))
    throw config_error("InvalidRho", "rho_decay must lie in (0,1), got " + std::to_string(rho_decay));
  const auto K = geometry.distances.rows();
  if (regions && static_cast<Eigen::Index>(regions->size()) != K)
    throw data_error("ShapeMismatch", "region labels do not cover every FOV");
  Matrix v(K, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index l = 0; l < K; ++l) {
      const bool split = regions && (*regions)[k] != (*regions)[l];
      v(k, l) = (k == l) ? 1.0 : (split ? 0.0 : std::pow(rho_decay, geometry.distances(k, l)));
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(v, Eigen::EigenvaluesOnly);
  const double min_eig = eig.eigenvalues().minCoeff();
  if (min_eig < 0.0) {
    v.diagonal().array() += -min_eig + 1e-8;
    const Vector d = v.diagonal().cwiseSqrt().cwiseInverse();
    v = d.asDiagonal() * v * d.asDiagonal();
    v.diagonal().setOnes();
  }
  return v;
}

FovPrior build_fov_prior(const SpatialDataset& dataset, const FovGeometry& geometry, const Hyperparams& hp) {
  std::optional<std::vector<std::string>> regions;
  if (!dataset.region_labels.empty()) {
    regions.emplace();
    for (const auto& f : dataset.fovs) regions->push_back(dataset.region_labels.at(f.fov_id));
  }
  FovPrior prior;
  prior.V = build_fov_correlation(geometry, hp.rho_decay, regions);
  prior.sigma_lambda_sq = hp.sigma_lambda_sq;
  prior.default_mean = hp.prior_mean;
  const int K = dataset.num_fovs();
  const int p = dataset.num_genes();
  if (!hp.prior_mean_M.empty()) {
    if (static_cast<int>(hp.prior_mean_M.size()) != p)
      throw config_error("ShapeMismatch", "prior mean needs one matrix per gene");
    for (const auto& m : hp.prior_mean_M) {
      if (m.rows() != K || m.cols() != p - 1)
        throw config_error("ShapeMismatch", "prior mean matrices must be K x (p-1)");
    }
    prior.M = hp.prior_mean_M;
  }
  prior.U = hp.prior_U ? *hp.prior_U : Matrix::Identity(p - 1, p - 1);
  if (prior.U.rows() != p - 1) throw config_error("ShapeMismatch", "U must be (p-1) x (p-1)");

  prior.prepare();
  return prior;
}

double morans_i(const Vector& values, const Matrix& weights) {
  const auto n = values.size();
  const Vector z = values.array() - values.mean();
  const double denom = z.squaredNorm();
  if (!(denom > 0.0)) throw data_error("DegenerateInput", "values are constant; Moran's I undefined");
  double w_sum = 0.0, num = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      w_sum += weights(i, j);
      num += weights(i, j) * z(i) * z(j);
    }
  }
  return static_cast<double>(n) / w_sum * num / denom;
}

double estimate_rho_decay(const SpatialDataset& dataset, const FovGeometry& geometry, double bandwidth) {
  const int K = dataset.num_fovs();
  if (K < 3) throw data_error("DegenerateInput", "Moran's I needs at least 3 FOVs");
  if (!(bandwidth > 0.0)) throw config_error("InvalidBandwidth", "bandwidth must be positive");
  Vector means(K);
  for (int k = 0; k < K; ++k) means(k) = dataset.fovs[k].expression.mean();
  Matrix w = (-geometry.distances.array().square() / (2.0 * bandwidth * bandwidth)).exp();
  const double i = morans_i(means, w);
  return std::clamp(i, 0.01, 0.99);
}

double marginal_inclusion_prob(double m, double sigma_sq) {
  if (m == 0.0) return 0.5;
  return normal_cdf(m / std::sqrt(sigma_sq + 1.0));
}

McEstimate joint_inclusion_prob(const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov, long n_mc,
                                std::uint64_t seed) {
  // Cholesky by hand so a singular (perfectly correlated) covariance is accepted.
  const double l11 = std::sqrt(std::max(cov(0, 0), 0.0));
  const double l21 = l11 > 0.0 ? cov(1, 0) / l11 : 0.0;
  const double l22 = std::sqrt(std::max(cov(1, 1) - l21 * l21, 0.0));
  auto rng = stream_engine(seed, {0x6A01});
  std::normal_distribution<double> z;
  double sum = 0.0, sum_sq = 0.0;
  for (long t = 0; t < n_mc; ++t) {
    const double z1 = z(rng), z2 = z(rng);
    const double v = normal_cdf(mean(0) + l11 * z1) * normal_cdf(mean(1) + l21 * z1 + l22 * z2);
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(n_mc);
  const double mu = sum / n;
  const double var = std::max(sum_sq / n - mu * mu, 0.0);
  return {mu, std::sqrt(var / n)};
}

}  // namespace msgr
