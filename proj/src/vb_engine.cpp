#include "msgr/vb_engine.hpp"

#include "msgr/error.hpp"
#include "msgr/normal.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iostream>
#include <mutex>
#include <thread>

namespace msgr {

DesignCache build_design_cache(const SpatialDataset& scaled, const GPBasis& basis) {
  DesignCache cache;
  const int p = scaled.num_genes();
  const int K = scaled.num_fovs();
  cache.num_genes = p;
  cache.gram.resize(static_cast<std::size_t>(K) * p);
  for (int k = 0; k < K; ++k) {
    const Matrix& psi = basis.eigenfunction_matrices[k];
    const Matrix& y = scaled.fovs[k].expression;
    for (int j = 0; j < p; ++j) {
      const Matrix weighted = y.col(j).cwiseAbs2().asDiagonal() * psi;
      Matrix g(psi.cols(), psi.cols());
      g.noalias() = psi.transpose() * weighted;
      cache.gram[static_cast<std::size_t>(k) * p + j] = 0.5 * (g + g.transpose());
    }
  }
  return cache;
}

Matrix WorkBuffers::design(int k, int slot) const {
  const int j = predictor_gene(node, slot);
  return data->fovs[k].expression.col(j).asDiagonal() * basis->eigenfunction_matrices[k];
}

Vector WorkBuffers::apply_design(int k, int slot, const Vector& v) const {
  const int j = predictor_gene(node, slot);
  return data->fovs[k].expression.col(j).cwiseProduct(basis->eigenfunction_matrices[k] * v);
}

Vector WorkBuffers::apply_design_transpose(int k, int slot, const Vector& r) const {
  const int j = predictor_gene(node, slot);
  return basis->eigenfunction_matrices[k].transpose() * data->fovs[k].expression.col(j).cwiseProduct(r);
}

Vector WorkBuffers::expected_residual(int k, int slot) const {
  const std::size_t idx = static_cast<std::size_t>(k) * num_predictors() + slot;
  return response(k) - (G_tilde[k] - G[idx]);
}

WorkBuffers build_design(const SpatialDataset& scaled, const GPBasis& basis, const DesignCache& cache, int i) {
  if (i < 0 || i >= scaled.num_genes()) throw config_error("InvalidNode", "node index out of range");
  WorkBuffers b;
  b.node = i;
  b.data = &scaled;
  b.basis = &basis;
  b.cache = &cache;
  const int K = scaled.num_fovs();
  const int J = scaled.num_genes() - 1;
  b.G.assign(static_cast<std::size_t>(K) * J, Vector());
  b.G_tilde.assign(K, Vector());
  for (int k = 0; k < K; ++k) {
    const auto n = scaled.fovs[k].num_cells();
    b.G_tilde[k] = Vector::Zero(n);
    for (int s = 0; s < J; ++s) b.G[static_cast<std::size_t>(k) * J + s] = Vector::Zero(n);
  }
  return b;
}

void refresh_expectations(const NodeVariationalState& state, WorkBuffers& buffers) {
  for (int k = 0; k < state.num_fovs; ++k) {
    buffers.G_tilde[k].setZero();
    for (int s = 0; s < state.num_predictors; ++s) {
      const std::size_t idx = state.index(k, s);
      buffers.G[idx] = state.p_incl(k, s) * buffers.apply_design(k, s, state.v_mean[idx]);
      buffers.G_tilde[k] += buffers.G[idx];
    }
  }
}

namespace {

// Ridge posterior mean and noise precision of y ~ N(X u, 1/w), u ~ N(0, s2 I),
// iterated as mean-field VB with a Gamma(a, b) prior on w. `X` is given by the
// per-slot column blocks Y_j * B.
struct RidgeFit {
  Vector coef;
  double noise_precision;
};

RidgeFit ridge_vb(const Matrix& x, const Vector& y, double s2, double a, double b, int iterations) {
  const auto n = x.rows();
  const auto P = x.cols();
  const double shape = a + 0.5 * static_cast<double>(n);
  double w = a / b;
  if (P > n) {
    // Dual form through the eigendecomposition of X X'.
    Matrix gram = x * x.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    if (eig.info() != Eigen::Success) throw numerical_error("SingularDesign", "eigendecomposition of X X' failed");
    const Vector d = eig.eigenvalues().cwiseMax(0.0);
    const Vector yt = eig.eigenvectors().transpose() * y;
    for (int it = 0; it < iterations; ++it) {
      double resid = 0.0, tr = 0.0;
      for (Eigen::Index t = 0; t < n; ++t) {
        const double r = (1.0 / w) / (s2 * d(t) + 1.0 / w);
        resid += r * r * yt(t) * yt(t);
        tr += d(t) / (w * d(t) + 1.0 / s2);
      }
      w = shape / (b + 0.5 * (resid + tr));
    }
    const Vector alpha = eig.eigenvectors() * (yt.array() / (s2 * d.array() + 1.0 / w)).matrix();
    return {s2 * (x.transpose() * alpha), w};
  }
  Matrix gram = x.transpose() * x;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw numerical_error("SingularDesign", "eigendecomposition of X'X failed");
  const Vector d = eig.eigenvalues().cwiseMax(0.0);
  const Vector bt = eig.eigenvectors().transpose() * (x.transpose() * y);
  const double yy = y.squaredNorm();
  for (int it = 0; it < iterations; ++it) {
    double resid = yy, tr = 0.0;
    for (Eigen::Index t = 0; t < P; ++t) {
      const double c = w / (w * d(t) + 1.0 / s2);
      resid += (d(t) * c * c - 2.0 * c) * bt(t) * bt(t);
      tr += d(t) / (w * d(t) + 1.0 / s2);
    }
    w = shape / (b + 0.5 * (std::max(resid, 0.0) + tr));
  }
  const Vector coef = eig.eigenvectors() * (w * bt.array() / (w * d.array() + 1.0 / s2)).matrix();
  return {coef, w};
}

// Moments of q(Lambda_ij) for U = I or general U (u^{jj'} entries of U^{-1}).
GaussianParams lambda_moments(const NodeVariationalState& state, const FovPrior& prior, int slot) {
  const double s = 1.0 / prior.sigma_lambda_sq;
  const int i = state.node;
  const double ujj = prior.U_inv.size() ? prior.U_inv(slot, slot) : 1.0;
  Vector r = ujj * prior.mean(i, slot);
  if (prior.U_inv.size()) {
    for (int t = 0; t < state.num_predictors; ++t) {
      if (t == slot || prior.U_inv(slot, t) == 0.0) continue;
      r -= prior.U_inv(slot, t) * (state.lambda_mean.col(t) - prior.mean(i, t));
    }
  }
  // (I + s u V^{-1})^{-1} = Q diag(d / (d + s u)) Q'
  const Vector f = prior.V_spectrum.array() / (prior.V_spectrum.array() + s * ujj);
  GaussianParams out;
  out.cov = prior.V_basis * f.asDiagonal() * prior.V_basis.transpose();
  const Vector rhs = state.ez.col(slot) + s * (prior.V_inv * r);
  out.mean = out.cov * rhs;
  return out;
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

NodeVariationalState init_node(int i, const SpatialDataset& scaled, const GPBasis& basis, const Hyperparams& hp,
                               const FovPrior& prior) {
  const int K = scaled.num_fovs();
  const int p = scaled.num_genes();
  const int J = p - 1;
  const int L = basis.size();
  NodeVariationalState st;
  st.node = i;
  st.num_fovs = K;
  st.num_predictors = J;
  st.omega_shape = Vector::Constant(K, hp.a_omega);
  st.omega_rate = Vector::Constant(K, hp.b_omega);
  st.omega_mean = st.omega_shape.cwiseQuotient(st.omega_rate);
  st.lambda_mean.resize(K, J);
  st.lambda_cov.assign(J, prior.sigma_lambda_sq * prior.V);
  for (int s = 0; s < J; ++s) st.lambda_mean.col(s) = prior.mean(i, s);
  st.p_incl = Matrix::Constant(K, J, 0.5);
  st.ez = Matrix::Zero(K, J);
  const Vector prior_var = hp.sigma_gp_sq * basis.eigenvalues;
  st.v_neg_var = prior_var;
  st.v_mean.assign(static_cast<std::size_t>(K) * J, Vector::Zero(L));
  st.v_cov.assign(static_cast<std::size_t>(K) * J, Matrix(prior_var.asDiagonal()));
  st.init_noise_precision = Vector::Zero(K);
  const Vector sqrt_eta = basis.eigenvalues.cwiseSqrt();

  for (int k = 0; k < K; ++k) {
    const Matrix& y = scaled.fovs[k].expression;
    const Matrix& B = basis.basis_matrices[k];
    const auto n = y.rows();
    Matrix x(n, static_cast<Eigen::Index>(J) * L);
    for (int s = 0; s < J; ++s) x.middleCols(static_cast<Eigen::Index>(s) * L, L) = y.col(predictor_gene(i, s)).asDiagonal() * B;
    const RidgeFit rf = ridge_vb(x, y.col(i), hp.sigma_gp_sq, hp.a_omega, hp.b_omega, 50);
    if (!rf.coef.allFinite()) throw numerical_error("SingularDesign", "initial regression produced non-finite values");
    st.init_noise_precision(k) = rf.noise_precision;
    for (int s = 0; s < J; ++s)
      st.v_mean[st.index(k, s)] = rf.coef.segment(static_cast<Eigen::Index>(s) * L, L).cwiseProduct(sqrt_eta);
  }
  return st;
}

double expected_squared_norm(const NodeVariationalState& state, const WorkBuffers& buffers, int k) {
  const Vector y = buffers.response(k);
  const Vector& gt = buffers.G_tilde[k];
  double ess = y.squaredNorm() - 2.0 * y.dot(gt) + gt.squaredNorm();
  for (int s = 0; s < state.num_predictors; ++s) {
    const std::size_t idx = state.index(k, s);
    const Matrix& hth = buffers.gram(k, s);
    const Vector& mu = state.v_mean[idx];
    ess -= buffers.G[idx].squaredNorm();
    ess += state.p_incl(k, s) * (mu.dot(hth * mu) + hth.cwiseProduct(state.v_cov[idx]).sum());
  }
  return ess;
}

GammaParams update_omega(const NodeVariationalState& state, const WorkBuffers& buffers, int k,
                         const Hyperparams& hp) {
  GammaParams g;
  g.shape = 0.5 * static_cast<double>(buffers.data->fovs[k].num_cells()) + hp.a_omega;
  g.rate = 0.5 * expected_squared_norm(state, buffers, k) + hp.b_omega;
  if (!(g.rate > 0.0))
    throw numerical_error("NonPositiveRate", "Gamma rate " + std::to_string(g.rate) + " for node " +
                                                 std::to_string(state.node) + ", FOV " + std::to_string(k));
  return g;
}

GaussianParams update_lambda(const NodeVariationalState& state, const FovPrior& prior, int slot) {
  return lambda_moments(state, prior, slot);
}

VBranch update_v_given_z(const Matrix& gram, const Vector& design_t_residual, double e_omega,
                         const Vector& prior_var) {
  const auto L = prior_var.size();
  VBranch out;
  out.precision = e_omega * gram;
  out.precision.diagonal() += prior_var.cwiseInverse();
  Eigen::LLT<Matrix> llt(out.precision);
  if (llt.info() != Eigen::Success) throw numerical_error("CholeskyFailure", "coefficient precision not positive definite");
  out.cov = llt.solve(Matrix::Identity(L, L));
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  out.mean = llt.solve(e_omega * design_t_residual);
  out.log_det_cov = -2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
  out.neg_var = prior_var;
  out.log_det_neg = prior_var.array().log().sum();
  return out;
}

VBranch update_v_given_z(const NodeVariationalState& state, const WorkBuffers& buffers, int slot, int k,
                         const Hyperparams& hp) {
  const Vector htr = buffers.apply_design_transpose(k, slot, buffers.expected_residual(k, slot));
  return update_v_given_z(buffers.gram(k, slot), htr, state.omega_mean(k), hp.sigma_gp_sq * buffers.basis->eigenvalues);
}

double update_inclusion(const VBranch& branch, double lambda_mean) {
  const double quad = branch.mean.dot(branch.precision * branch.mean);
  const double logit = 0.5 * (branch.log_det_cov - branch.log_det_neg) + 0.5 * quad + logit_phi_stable(lambda_mean);
  return std::clamp(logistic(logit), kInclusionClamp, 1.0 - kInclusionClamp);
}

double expected_z(double lambda_mean, double p) {
  return lambda_mean + p * inverse_mills_lower(lambda_mean) - (1.0 - p) * inverse_mills_upper(lambda_mean);
}

namespace {

double sup_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

NodeVariationalState run_node(int i, const SpatialDataset& scaled, const GPBasis& basis, const DesignCache& cache,
                              const FovPrior& prior, const Hyperparams& hp, const RunOptions& options) {
  NodeVariationalState st = init_node(i, scaled, basis, hp, prior);
  WorkBuffers buf = build_design(scaled, basis, cache, i);
  refresh_expectations(st, buf);
  const int K = st.num_fovs;
  const int J = st.num_predictors;
  const double lr = hp.learning_rate;

  for (int sweep = 1; sweep <= hp.max_iter; ++sweep) {
    const NodeVariationalState old = st;
    for (int k = 0; k < K; ++k) {
      const GammaParams g = update_omega(st, buf, k, hp);
      st.omega_shape(k) = g.shape;
      st.omega_rate(k) = g.rate;
      st.omega_mean(k) = g.mean();
      for (int s = 0; s < J; ++s) {
        GaussianParams lam = lambda_moments(st, prior, s);
        st.lambda_mean.col(s) = lam.mean;
        st.lambda_cov[s] = std::move(lam.cov);

        const std::size_t idx = st.index(k, s);
        const VBranch vb = update_v_given_z(st, buf, s, k, hp);
        st.v_mean[idx] = vb.mean;
        st.v_cov[idx] = vb.cov;

        const double el = st.lambda_mean(k, s);
        st.ez(k, s) = expected_z(el, st.p_incl(k, s));
        st.p_incl(k, s) = update_inclusion(vb, el);

        Vector g_new = st.p_incl(k, s) * buf.apply_design(k, s, vb.mean);
        buf.G_tilde[k] += g_new - buf.G[idx];
        buf.G[idx] = std::move(g_new);
      }
    }

    // Damping over the whole sweep.
    st.omega_rate = damp<Vector>(st.omega_rate, old.omega_rate, lr);
    st.omega_mean = st.omega_shape.cwiseQuotient(st.omega_rate);
    st.lambda_mean = damp<Matrix>(st.lambda_mean, old.lambda_mean, lr);
    for (int s = 0; s < J; ++s) st.lambda_cov[s] = damp<Matrix>(st.lambda_cov[s], old.lambda_cov[s], lr);
    st.p_incl = damp<Matrix>(st.p_incl, old.p_incl, lr);
    st.ez = damp<Matrix>(st.ez, old.ez, lr);
    double change = std::max({sup_diff(st.p_incl, old.p_incl), sup_diff(st.omega_mean, old.omega_mean),
                              sup_diff(st.lambda_mean, old.lambda_mean)});
    for (std::size_t idx = 0; idx < st.v_mean.size(); ++idx) {
      st.v_mean[idx] = damp<Vector>(st.v_mean[idx], old.v_mean[idx], lr);
      st.v_cov[idx] = damp<Matrix>(st.v_cov[idx], old.v_cov[idx], lr);
      change = std::max(change, sup_diff(st.v_mean[idx], old.v_mean[idx]));
    }
    refresh_expectations(st, buf);

    st.iterations = sweep;
    st.final_change = change;
    st.change_history.push_back(change);
    if (options.verbose) std::cerr << "node " << i << " sweep " << sweep << " change " << change << '\n';
    if (!std::isfinite(change))
      throw numerical_error("NonFiniteState", "node " + std::to_string(i) + " diverged at sweep " + std::to_string(sweep));
    if (change < hp.tol) {
      st.converged = true;
      break;
    }
  }
  return st;
}

bool FitResult::all_converged() const {
  return std::all_of(nodes.begin(), nodes.end(), [](const NodeVariationalState& s) { return s.converged; });
}

FitResult fit(const SpatialDataset& scaled, const GPBasis& basis, const FovPrior& prior, const Hyperparams& hp,
              int threads, const RunOptions& options) {
  hp.validate();
  const int p = scaled.num_genes();
  const DesignCache cache = build_design_cache(scaled, basis);
  FitResult result;
  result.nodes.resize(p);
  result.hyperparams = hp;
  result.basis = basis;
  result.gene_names = scaled.gene_names;
  for (const auto& f : scaled.fovs) result.fov_ids.push_back(f.fov_id);

  std::vector<std::exception_ptr> errors(p);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < p; i = next++) {
      try {
        result.nodes[i] = run_node(i, scaled, basis, cache, prior, hp, options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_threads = std::clamp(threads, 1, std::max(p, 1));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::string message;
  std::optional<ErrorKind> kind;
  for (int i = 0; i < p; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      if (!kind) kind = e.kind();
      message += "node " + std::to_string(i) + " (" + scaled.gene_names[i] + "): " + e.what() + "; ";
    } catch (const std::exception& e) {
      if (!kind) kind = ErrorKind::Numerical;
      message += "node " + std::to_string(i) + " (" + scaled.gene_names[i] + "): " + e.what() + "; ";
    }
  }
  if (kind) throw Error(*kind, "NodeFailure", message);
  return result;
}

}  // namespace msgr
