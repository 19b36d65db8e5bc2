#include "msgr/postprocess.hpp"

#include "msgr/csv.hpp"
#include "msgr/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <unordered_map>

namespace msgr {

const EdgeCoefficients* NetworkEstimate::find(int k, int i, int j) const {
  if (i > j) std::swap(i, j);
  for (const auto& c : coefficients) {
    if (c.fov == k && c.i == i && c.j == j) return &c;
  }
  return nullptr;
}

std::vector<Matrix> pip_matrix(const FitResult& fit) {
  const int p = static_cast<int>(fit.gene_names.size());
  const int K = static_cast<int>(fit.fov_ids.size());
  if (static_cast<int>(fit.nodes.size()) != p)
    throw data_error("MissingNode", "fit holds " + std::to_string(fit.nodes.size()) + " node states for " +
                                        std::to_string(p) + " genes");
  for (int i = 0; i < p; ++i) {
    const auto& st = fit.nodes[i];
    if (st.node != i || st.p_incl.rows() != K || st.p_incl.cols() != p - 1)
      throw data_error("MissingNode", "state of node " + std::to_string(i) + " is absent or malformed");
  }
  std::vector<Matrix> out(K, Matrix::Zero(p, p));
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < p; ++i) {
      for (int j = i + 1; j < p; ++j) {
        const double v = std::min(fit.nodes[i].p_incl(k, predictor_slot(i, j)), fit.nodes[j].p_incl(k, predictor_slot(j, i)));
        out[k](i, j) = v;
        out[k](j, i) = v;
      }
    }
  }
  return out;
}

std::vector<double> flatten_pips(const std::vector<Matrix>& pips) {
  std::vector<double> out;
  for (const auto& m : pips) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = i + 1; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  return out;
}

double bfdr_threshold(const std::vector<double>& pips, double alpha) {
  const double nothing = std::nextafter(1.0, 2.0);
  std::vector<double> sorted = pips;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  long last = -1;
  double sum = 0.0;
  for (std::size_t t = 0; t < sorted.size(); ++t) {
    sum += 1.0 - sorted[t];
    if (sum / static_cast<double>(t + 1) <= alpha) last = static_cast<long>(t);
    else break;  // cumulative means of ascending q never decrease
  }
  // Drop a tie block that continues past the cutoff.
  while (last >= 0 && static_cast<std::size_t>(last + 1) < sorted.size() && sorted[last + 1] == sorted[last]) {
    const double v = sorted[last];
    while (last >= 0 && sorted[last] == v) --last;
  }
  return last >= 0 ? sorted[last] : nothing;
}

std::vector<EdgeList> select_edges(const std::vector<Matrix>& pips, double kappa) {
  std::vector<EdgeList> out(pips.size());
  for (std::size_t k = 0; k < pips.size(); ++k) {
    const Matrix& m = pips[k];
    for (int i = 0; i < m.rows(); ++i)
      for (int j = i + 1; j < m.cols(); ++j)
        if (m(i, j) >= kappa) out[k].emplace_back(i, j);
  }
  return out;
}

Matrix omega_diagonal(const FitResult& fit) {
  const int p = static_cast<int>(fit.nodes.size());
  const int K = static_cast<int>(fit.fov_ids.size());
  Matrix out(p, K);
  for (int i = 0; i < p; ++i) out.row(i) = fit.nodes[i].omega_mean.transpose();
  return out;
}

std::vector<EdgeCoefficients> symmetrize_coefficients(const FitResult& fit, const std::vector<EdgeList>& edges) {
  const Vector inv_sqrt_eta = fit.basis.eigenvalues.cwiseSqrt().cwiseInverse();
  // u_tilde_ij^k = E(omega_ii^k) E(u_ij^k), with u = v / sqrt(eta).
  auto tilde = [&](int i, int j, int k) -> Vector {
    const auto& st = fit.nodes[i];
    return st.omega_mean(k) * st.v_mean[st.index(k, predictor_slot(i, j))].cwiseProduct(inv_sqrt_eta);
  };
  std::vector<EdgeCoefficients> out;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    for (auto [i, j] : edges[k]) {
      if (i > j) std::swap(i, j);
      Vector uij = tilde(i, j, static_cast<int>(k));
      Vector uji = tilde(j, i, static_cast<int>(k));
      EdgeCoefficients e{static_cast<int>(k), i, j, {}};
      e.u = uji.lpNorm<1>() < uij.lpNorm<1>() ? std::move(uji) : std::move(uij);
      out.push_back(std::move(e));
    }
  }
  return out;
}

void pd_rescale(std::vector<EdgeCoefficients>& coefficients, const std::vector<double>& sup_norms,
                const Matrix& omega_diag) {
  Matrix load = Matrix::Zero(omega_diag.rows(), omega_diag.cols());
  for (const auto& e : coefficients) {
    const double l1 = e.u.lpNorm<1>();
    load(e.i, e.fov) += l1;
    load(e.j, e.fov) += l1;
  }
  Matrix divisor(load.rows(), load.cols());
  for (Eigen::Index i = 0; i < load.rows(); ++i)
    for (Eigen::Index k = 0; k < load.cols(); ++k)
      divisor(i, k) = std::max(1.0, sup_norms[k] * load(i, k) / omega_diag(i, k));
  for (auto& e : coefficients) {
    const double d = std::max(divisor(e.i, e.fov), divisor(e.j, e.fov));
    if (d > 1.0) e.u /= d;
  }
}

NetworkEstimate postprocess(const FitResult& fit, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw config_error("InvalidHyperparameter", "alpha must lie in (0,1]");
  NetworkEstimate est;
  est.gene_names = fit.gene_names;
  est.fov_ids = fit.fov_ids;
  est.alpha = alpha;
  est.pip = pip_matrix(fit);
  est.kappa = bfdr_threshold(flatten_pips(est.pip), alpha);
  est.edges = select_edges(est.pip, est.kappa);
  est.omega_diag = omega_diagonal(fit);
  est.coefficients = symmetrize_coefficients(fit, est.edges);
  pd_rescale(est.coefficients, fit.basis.sup_norms, est.omega_diag);
  return est;
}

EdgeSurface assemble_surfaces(const NetworkEstimate& estimate, const GPBasis& basis, int i, int j, int k,
                              bool allow_unselected) {
  const Matrix& B = basis.basis_matrices.at(k);
  const auto n = B.rows();
  EdgeSurface s{Vector::Zero(n), Vector::Zero(n), Vector::Zero(n)};
  const EdgeCoefficients* e = estimate.find(k, i, j);
  if (!e) {
    if (allow_unselected) return s;
    throw data_error("EdgeNotSelected", "edge (" + std::to_string(i) + ", " + std::to_string(j) + ") in FOV index " +
                                            std::to_string(k) + " is not selected");
  }
  const Vector ub = B * e->u;
  const double wii = estimate.omega_diag(i, k), wjj = estimate.omega_diag(j, k);
  s.gamma = ub / wii;
  s.omega = -ub;
  s.rho = ub / std::sqrt(wii * wjj);
  return s;
}

Matrix precision_at(const NetworkEstimate& estimate, int k, const Vector& basis_row) {
  const int p = estimate.num_genes();
  Matrix omega = Matrix::Zero(p, p);
  omega.diagonal() = estimate.omega_diag.col(k);
  for (const auto& e : estimate.coefficients) {
    if (e.fov != k) continue;
    const double v = -e.u.dot(basis_row);
    omega(e.i, e.j) = v;
    omega(e.j, e.i) = v;
  }
  return omega;
}

Eigen::MatrixXi connectivity_degree(const NetworkEstimate& estimate) {
  Eigen::MatrixXi deg = Eigen::MatrixXi::Zero(estimate.num_genes(), estimate.num_fovs());
  for (int k = 0; k < estimate.num_fovs(); ++k) {
    for (auto [i, j] : estimate.edges[k]) {
      ++deg(i, k);
      ++deg(j, k);
    }
  }
  return deg;
}

Vector connectivity_score(const NetworkEstimate& estimate, const std::vector<int>& subset) {
  const auto m = subset.size();
  if (m < 2) throw config_error("SubsetTooSmall", "connectivity score needs at least two genes");
  std::vector<bool> in(estimate.num_genes(), false);
  for (int g : subset) in.at(g) = true;
  const double possible = static_cast<double>(m * (m - 1) / 2);
  Vector cs(estimate.num_fovs());
  for (int k = 0; k < estimate.num_fovs(); ++k) {
    int count = 0;
    for (auto [i, j] : estimate.edges[k]) count += (in[i] && in[j]) ? 1 : 0;
    cs(k) = 100.0 * count / possible;
  }
  return cs;
}

void write_edges_csv(const NetworkEstimate& estimate, const std::filesystem::path& path) {
  auto out = csv::open_write(path);
  out << "fov,gene_i,gene_j,pip,l1_norm\n";
  for (int k = 0; k < estimate.num_fovs(); ++k) {
    for (auto [i, j] : estimate.edges[k]) {
      const EdgeCoefficients* e = estimate.find(k, i, j);
      out << estimate.fov_ids[k] << ',' << estimate.gene_names[i] << ',' << estimate.gene_names[j] << ','
          << csv::format(estimate.pip[k](i, j)) << ',' << csv::format(e ? e->u.lpNorm<1>() : 0.0) << '\n';
    }
  }
}

void write_pip_matrices(const NetworkEstimate& estimate, const std::filesystem::path& dir) {
  for (int k = 0; k < estimate.num_fovs(); ++k) {
    auto out = csv::open_write(dir / ("pip_fov" + std::to_string(estimate.fov_ids[k]) + ".csv"));
    out << "gene";
    for (const auto& g : estimate.gene_names) out << ',' << g;
    out << '\n';
    for (int i = 0; i < estimate.num_genes(); ++i) {
      out << estimate.gene_names[i];
      for (int j = 0; j < estimate.num_genes(); ++j) out << ',' << csv::format(estimate.pip[k](i, j));
      out << '\n';
    }
  }
}

void write_degree_csv(const NetworkEstimate& estimate, const std::filesystem::path& path) {
  const Eigen::MatrixXi deg = connectivity_degree(estimate);
  auto out = csv::open_write(path);
  out << "fov,gene,degree\n";
  for (int k = 0; k < estimate.num_fovs(); ++k)
    for (int g = 0; g < estimate.num_genes(); ++g)
      out << estimate.fov_ids[k] << ',' << estimate.gene_names[g] << ',' << deg(g, k) << '\n';
}

void write_cs_csv(const NetworkEstimate& estimate, const std::vector<std::pair<std::string, std::vector<int>>>& pathways,
                  const std::filesystem::path& path) {
  auto out = csv::open_write(path);
  out << "fov,pathway,cs\n";
  for (const auto& [name, genes] : pathways) {
    const Vector cs = connectivity_score(estimate, genes);
    for (int k = 0; k < estimate.num_fovs(); ++k) out << estimate.fov_ids[k] << ',' << name << ',' << csv::format(cs(k)) << '\n';
  }
}

void write_surfaces_csv(const NetworkEstimate& estimate, const GPBasis& basis, const SpatialDataset& scaled,
                        const std::filesystem::path& path) {
  auto out = csv::open_write(path);
  out << "fov,cell_id,gene_i,gene_j,gamma,omega_ij,rho_ij\n";
  for (const auto& e : estimate.coefficients) {
    const EdgeSurface s = assemble_surfaces(estimate, basis, e.i, e.j, e.fov);
    const auto& fov = scaled.fovs[e.fov];
    for (Eigen::Index n = 0; n < fov.num_cells(); ++n) {
      out << fov.fov_id << ',' << fov.cell_ids[n] << ',' << estimate.gene_names[e.i] << ','
          << estimate.gene_names[e.j] << ',' << csv::format(s.gamma(n)) << ',' << csv::format(s.omega(n)) << ','
          << csv::format(s.rho(n)) << '\n';
    }
  }
}

std::vector<EdgeList> read_edges_csv(const std::filesystem::path& path, const std::vector<int>& fov_ids,
                                     const std::vector<std::string>& gene_names) {
  const csv::Table t = csv::read(path);
  const int cf = t.column("fov"), ci = t.column("gene_i"), cj = t.column("gene_j");
  if (cf < 0 || ci < 0 || cj < 0)
    throw data_error("MissingColumn", path.string() + " needs columns fov,gene_i,gene_j");
  std::unordered_map<long long, int> fov_index;
  for (std::size_t k = 0; k < fov_ids.size(); ++k) fov_index[fov_ids[k]] = static_cast<int>(k);
  std::unordered_map<std::string, int> gene_index;
  for (std::size_t g = 0; g < gene_names.size(); ++g) gene_index[gene_names[g]] = static_cast<int>(g);
  std::vector<EdgeList> out(fov_ids.size());
  for (const auto& row : t.rows) {
    long long fov = 0;
    if (!csv::parse_int(row.at(cf), fov)) throw data_error("ParseError", path.string() + ": bad fov '" + row[cf] + "'");
    auto kf = fov_index.find(fov);
    auto gi = gene_index.find(row.at(ci));
    auto gj = gene_index.find(row.at(cj));
    if (kf == fov_index.end() || gi == gene_index.end() || gj == gene_index.end())
      throw data_error("DimensionMismatch", path.string() + ": unknown fov or gene in row '" + row[cf] + "," +
                                                row[ci] + "," + row[cj] + "'");
    int i = gi->second, j = gj->second;
    if (i == j) throw data_error("DimensionMismatch", path.string() + ": self edge " + row[ci]);
    if (i > j) std::swap(i, j);
    out[kf->second].emplace_back(i, j);
  }
  for (auto& e : out) {
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
  }
  return out;
}

}  // namespace msgr
