#pragma once

#include "msgr/data_model.hpp"
#include "msgr/gp_basis.hpp"
#include "msgr/priors.hpp"

#include <vector>

namespace msgr {

/// Position of predictor j among the p-1 predictors of node i.
inline int predictor_slot(int i, int j) { return j < i ? j : j - 1; }
/// Inverse of predictor_slot.
inline int predictor_gene(int i, int slot) { return slot < i ? slot : slot + 1; }

/// Gram matrices H'H of the node-regression designs, shared by all nodes.
///
/// Column l of H_ij^k is Y_j(S^k) * psi_l(S^k), which does not depend on the
/// response i, so one L x L matrix per (gene j, FOV k) serves every regression.
struct DesignCache {
  int num_genes = 0;
  std::vector<Matrix> gram;  // index k * p + j

  const Matrix& at(int k, int j) const { return gram[static_cast<std::size_t>(k) * num_genes + j]; }
};

DesignCache build_design_cache(const SpatialDataset& scaled, const GPBasis& basis);

/// Variational parameters of one node-wise regression (response gene `node`).
/// Per-(FOV, predictor) quantities are indexed `k * (p-1) + slot`.
struct NodeVariationalState {
  int node = 0;
  int num_fovs = 0;
  int num_predictors = 0;

  // q(omega_ii^k) = Gamma(shape, rate)
  Vector omega_shape, omega_rate, omega_mean;
  // q(Lambda_ij) = N(lambda_mean.col(slot), lambda_cov[slot])
  Matrix lambda_mean;  // K x (p-1)
  std::vector<Matrix> lambda_cov;
  // q(v | z > 0) = N(v_mean, v_cov); q(v | z < 0) = N(0, diag(v_neg_var))
  std::vector<Vector> v_mean;
  std::vector<Matrix> v_cov;
  Vector v_neg_var;
  Matrix p_incl;  // K x (p-1)
  Matrix ez;      // K x (p-1)

  // Noise precision reached by the per-FOV initialization regression.
  Vector init_noise_precision;

  int iterations = 0;
  bool converged = false;
  double final_change = 0.0;
  std::vector<double> change_history;

  std::size_t index(int k, int slot) const {
    return static_cast<std::size_t>(k) * num_predictors + slot;
  }
};

/// Expectation buffers of one node regression.
struct WorkBuffers {
  int node = 0;
  const SpatialDataset* data = nullptr;
  const GPBasis* basis = nullptr;
  const DesignCache* cache = nullptr;
  std::vector<Vector> G;        // per (k, slot): p * H mu
  std::vector<Vector> G_tilde;  // per k: sum over slots of G

  int num_predictors() const { return data->num_genes() - 1; }
  const Vector response(int k) const { return data->fovs[k].expression.col(node); }
  const Matrix& gram(int k, int slot) const { return cache->at(k, predictor_gene(node, slot)); }

  /// Materialized design H_ij^k (N_k x L).
  Matrix design(int k, int slot) const;
  /// H_ij^k v without forming H.
  Vector apply_design(int k, int slot, const Vector& v) const;
  /// (H_ij^k)' r without forming H.
  Vector apply_design_transpose(int k, int slot, const Vector& r) const;
  /// E R_ij^k = Y_i - (G_tilde_k - G_kslot).
  Vector expected_residual(int k, int slot) const;
};

/// Buffers for node i; `cache` must outlive them.
WorkBuffers build_design(const SpatialDataset& scaled, const GPBasis& basis, const DesignCache& cache, int i);

/// Recomputes every G and G_tilde from the state.
void refresh_expectations(const NodeVariationalState& state, WorkBuffers& buffers);

/// Per-FOV variational ridge regression on the joint design, then the default
/// starting values for everything else.
NodeVariationalState init_node(int i, const SpatialDataset& scaled, const GPBasis& basis, const Hyperparams& hp,
                               const FovPrior& prior);

/// E||Y_i - sum_j H_ij v_ij I(z_ij > 0)||^2 for FOV k.
double expected_squared_norm(const NodeVariationalState& state, const WorkBuffers& buffers, int k);

struct GammaParams {
  double shape = 0.0;
  double rate = 0.0;
  double mean() const { return shape / rate; }
};

GammaParams update_omega(const NodeVariationalState& state, const WorkBuffers& buffers, int k,
                         const Hyperparams& hp);

struct GaussianParams {
  Vector mean;
  Matrix cov;
};

/// q(Lambda_ij) given E z_ij over all FOVs and the current means of the other predictors.
GaussianParams update_lambda(const NodeVariationalState& state, const FovPrior& prior, int slot);

/// Conditional Gaussian of the basis coefficients given z > 0 and the z < 0 branch.
struct VBranch {
  Vector mean;        // mu(z>0)
  Matrix cov;         // Sigma(z>0)
  Matrix precision;   // Sigma(z>0)^{-1}
  double log_det_cov = 0.0;
  Vector neg_var;     // diagonal of Sigma(z<0); its mean is zero
  double log_det_neg = 0.0;
};

/// Core update: precision = E(omega) H'H + diag(1/prior_var), mean = cov E(omega) H'R.
VBranch update_v_given_z(const Matrix& gram, const Vector& design_t_residual, double e_omega,
                         const Vector& prior_var);

VBranch update_v_given_z(const NodeVariationalState& state, const WorkBuffers& buffers, int slot, int k,
                         const Hyperparams& hp);

/// p = logistic(logdet ratio / 2 + mu' Sigma^{-1} mu / 2 + logit Phi(E lambda)), clamped.
double update_inclusion(const VBranch& branch, double lambda_mean);

/// Mean of the two-sided truncated-normal mixture for z.
double expected_z(double lambda_mean, double p);

inline constexpr double kInclusionClamp = 1e-12;

template <typename T>
T damp(const T& fresh, const T& previous, double learning_rate) {
  return learning_rate * fresh + (1.0 - learning_rate) * previous;
}

struct RunOptions {
  bool verbose = false;
};

/// Coordinate-ascent sweeps with damping until the sup-norm change drops below tol.
NodeVariationalState run_node(int i, const SpatialDataset& scaled, const GPBasis& basis, const DesignCache& cache,
                              const FovPrior& prior, const Hyperparams& hp, const RunOptions& options = {});

struct FitResult {
  std::vector<NodeVariationalState> nodes;
  Hyperparams hyperparams;
  GPBasis basis;
  std::vector<std::string> gene_names;
  std::vector<int> fov_ids;

  bool all_converged() const;
};

/// Runs every node regression, `threads` at a time. Results do not depend on `threads`.
FitResult fit(const SpatialDataset& scaled, const GPBasis& basis, const FovPrior& prior, const Hyperparams& hp,
              int threads = 1, const RunOptions& options = {});

}  // namespace msgr
