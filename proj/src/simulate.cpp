#include "msgr/simulate.hpp"

#include "msgr/csv.hpp"
#include "msgr/error.hpp"
#include "msgr/priors.hpp"
#include "msgr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace msgr {

namespace {

constexpr std::uint64_t kGeometryStream = 1;
constexpr std::uint64_t kSelectionStream = 2;
constexpr std::uint64_t kFunctionStream = 3;
constexpr std::uint64_t kExpressionStream = 4;

constexpr int kBankSize = 6;
constexpr int kMaxRedraws = 1000;
constexpr int kMaxDiagonalSteps = 100;
// Scenario II: GP draws are standardized to this spread before the retention test.
constexpr double kLibraryScale = 0.35;

// Bounded forms on the unit square, each with maximum 1.
double bank_form(int form, double x, double y) {
  using std::numbers::pi;
  switch (form) {
    case 0: return 0.6 + 0.4 * x;
    case 1: return 0.6 + 0.4 * y;
    case 2: return 0.5 + 0.5 * std::sin(pi * x);
    case 3: return 0.5 + 0.5 * std::sin(pi * y);
    case 4: return 0.6 + 0.4 * std::sin(pi * x) * std::sin(pi * y);
    default: return 1.0 - 0.4 * x * y;
  }
}

// GP inputs for Scenario II: FOV-centered, in units of the lattice standard deviation.
double local_scale(const SimConfig& c) { return c.fov_size / (2.0 * std::sqrt(3.0)); }

std::size_t pair_index(int i, int j, int p) {
  // Position of (i<j) in lexicographic order.
  return static_cast<std::size_t>(i) * (2 * p - i - 1) / 2 + (j - i - 1);
}

}  // namespace

const char* scenario_name(Scenario s) { return s == Scenario::I ? "I" : "II"; }

void SimConfig::validate() const {
  auto require = [](bool ok, const char* code, const std::string& msg) {
    if (!ok) throw config_error(code, msg);
  };
  require(p >= 2, "InvalidConfig", "p must be at least 2");
  require(grid_rows >= 1 && grid_cols >= 1, "InvalidConfig", "FOV grid must be at least 1 x 1");
  require(cells_per_fov >= 1, "InvalidConfig", "cells per FOV must be positive");
  require(rho_decay > 0.0 && rho_decay < 1.0, "InvalidRho", "rho_decay must lie in (0,1)");
  require(sparsity > 0.0 && sparsity < 1.0, "InvalidSparsity", "sparsity must lie in (0,1), got " + std::to_string(sparsity));
  require(fov_size > 0.0 && fov_spacing >= 0.0, "InvalidConfig", "FOV size must be positive and spacing nonnegative");
  require(candidate_grid >= 1, "InvalidConfig", "candidate grid must be positive");
  if (static_cast<long>(candidate_grid) * candidate_grid < cells_per_fov)
    throw data_error("TooManyCells", std::to_string(cells_per_fov) + " cells requested from a " +
                                         std::to_string(candidate_grid) + "^2 lattice");
}

double GroundTruth::edge_value(const TrueEdgeFunction& f, const Point& s) const {
  const Point origin = fov_origins.row(f.fov).transpose();
  if (f.form >= 0) {
    const Point u = (s - origin) / config.fov_size;
    return f.amplitude * bank_form(f.form, u.x(), u.y());
  }
  const Point center = origin + Point::Constant(0.5 * config.fov_size);
  return f.amplitude * gp.basis_at((s - center) / local_scale(config)).dot(f.gp_coef);
}

SpatialDataset generate_geometry(const SimConfig& config) {
  config.validate();
  SpatialDataset ds;
  for (int g = 0; g < config.p; ++g) ds.gene_names.push_back("G" + std::to_string(g + 1));
  const double pitch = config.fov_size + config.fov_spacing;
  const int m = config.candidate_grid;
  const int total = m * m;
  std::int64_t next_id = 1;
  for (int r = 0; r < config.grid_rows; ++r) {
    for (int c = 0; c < config.grid_cols; ++c) {
      const int k = r * config.grid_cols + c;
      auto rng = stream_engine(config.seed, {kGeometryStream, static_cast<std::uint64_t>(k)});
      std::vector<int> idx(total);
      std::iota(idx.begin(), idx.end(), 0);
      for (int t = 0; t < config.cells_per_fov; ++t) {
        std::uniform_int_distribution<int> pick(t, total - 1);
        std::swap(idx[t], idx[pick(rng)]);
      }
      idx.resize(config.cells_per_fov);
      std::sort(idx.begin(), idx.end());
      FovBlock f;
      f.fov_id = k + 1;
      f.coordinates.resize(config.cells_per_fov, 2);
      f.expression = Matrix::Zero(config.cells_per_fov, config.p);
      for (int n = 0; n < config.cells_per_fov; ++n) {
        const int ix = idx[n] % m, iy = idx[n] / m;
        f.coordinates(n, 0) = c * pitch + (ix + 0.5) * config.fov_size / m;
        f.coordinates(n, 1) = r * pitch + (iy + 0.5) * config.fov_size / m;
        f.cell_ids.push_back(next_id++);
      }
      f.centroid = f.coordinates.colwise().mean().transpose();
      ds.fovs.push_back(std::move(f));
    }
  }
  return ds;
}

GroundTruth generate_selection(const SimConfig& config, const SpatialDataset& geometry) {
  config.validate();
  const int p = config.p;
  const int K = geometry.num_fovs();
  GroundTruth truth;
  truth.config = config;
  truth.fov_origins.resize(K, 2);
  const double pitch = config.fov_size + config.fov_spacing;
  for (int k = 0; k < K; ++k) {
    truth.fov_origins(k, 0) = (k % config.grid_cols) * pitch;
    truth.fov_origins(k, 1) = (k / config.grid_cols) * pitch;
  }
  const Matrix V = build_fov_correlation(fov_geometry(geometry), config.rho_decay);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(V);
  const Matrix root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  const int pairs = p * (p - 1) / 2;
  truth.latent.resize(pairs, K);
  auto rng = stream_engine(config.seed, {kSelectionStream});
  std::normal_distribution<double> normal;
  Vector z(K);
  for (int r = 0; r < pairs; ++r) {
    for (int k = 0; k < K; ++k) z(k) = normal(rng);
    truth.latent.row(r) = (root * z).transpose();
  }
  const auto total = static_cast<std::size_t>(pairs) * K;
  const auto count = static_cast<std::size_t>(std::llround(config.sparsity * static_cast<double>(total)));
  std::vector<double> all(truth.latent.data(), truth.latent.data() + total);
  double threshold = std::numeric_limits<double>::infinity();
  if (count > 0) {
    std::nth_element(all.begin(), all.begin() + (count - 1), all.end(), std::greater<>());
    threshold = all[count - 1];
  }
  truth.edges.assign(K, {});
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < p; ++i)
      for (int j = i + 1; j < p; ++j)
        if (truth.latent(pair_index(i, j, p), k) >= threshold) truth.edges[k].emplace_back(i, j);
  truth.diagonals = Matrix::Ones(p, K);
  return truth;
}

void build_precision_surfaces(GroundTruth& truth, const SpatialDataset& geometry) {
  const SimConfig& cfg = truth.config;
  const int p = cfg.p;
  const int K = geometry.num_fovs();
  truth.functions.clear();
  if (cfg.scenario == Scenario::II) truth.gp = eigenpairs_2d(0.01, 0.5, 10);

  for (int k = 0; k < K; ++k) {
    const auto& fov = geometry.fovs[k];
    const auto n = fov.num_cells();
    Matrix local_basis;
    if (cfg.scenario == Scenario::II) {
      const Point center = truth.fov_origins.row(k).transpose() + Point::Constant(0.5 * cfg.fov_size);
      local_basis.resize(n, truth.gp.size());
      for (Eigen::Index c = 0; c < n; ++c)
        local_basis.row(c) = truth.gp.basis_at((fov.coordinates.row(c).transpose() - center) / local_scale(cfg)).transpose();
    }
    for (auto [i, j] : truth.edges[k]) {
      auto rng = stream_engine(cfg.seed, {kFunctionStream, pair_index(i, j, p), static_cast<std::uint64_t>(k)});
      TrueEdgeFunction f;
      f.fov = k;
      f.i = i;
      f.j = j;
      if (cfg.scenario == Scenario::I) {
        std::uniform_int_distribution<int> form(0, kBankSize - 1);
        std::uniform_real_distribution<double> amp(0.3, 0.6);
        std::bernoulli_distribution sign(0.5);
        f.form = form(rng);
        f.amplitude = amp(rng) * (sign(rng) ? 1.0 : -1.0);
        f.values.resize(n);
        for (Eigen::Index c = 0; c < n; ++c) f.values(c) = truth.edge_value(f, fov.coordinates.row(c).transpose());
      } else {
        std::normal_distribution<double> normal;
        bool kept = false;
        for (int attempt = 0; attempt < kMaxRedraws && !kept; ++attempt) {
          Vector w(truth.gp.size());
          for (auto& x : w) x = normal(rng);
          const Vector g = local_basis * w;
          const double sd = std::sqrt((g.array() - g.mean()).square().mean());
          if (!(sd > 0.0)) continue;
          const double scale = kLibraryScale / sd;
          f.pre_scale_max = scale * g.cwiseAbs().maxCoeff();
          if (f.pre_scale_max > 0.5) {
            f.gp_coef = w;
            f.amplitude = 2.0 * scale;
            f.values = f.amplitude * g;
            kept = true;
          }
        }
        if (!kept) throw numerical_error("NonPD", "no GP draw passed the retention rule");
      }
      truth.functions.push_back(std::move(f));
    }

    // Diagonals.
    if (cfg.scenario == Scenario::I) {
      Matrix row_abs = Matrix::Zero(n, p);
      for (const auto& f : truth.functions) {
        if (f.fov != k) continue;
        row_abs.col(f.i) += f.values.cwiseAbs();
        row_abs.col(f.j) += f.values.cwiseAbs();
      }
      for (int i = 0; i < p; ++i) truth.diagonals(i, k) = 1.0 + (n > 0 ? row_abs.col(i).maxCoeff() : 0.0);
    } else {
      truth.diagonals.col(k).setOnes();
      int steps = 0;
      for (;;) {
        bool pd = true;
        for (Eigen::Index c = 0; c < n && pd; ++c) {
          Eigen::SelfAdjointEigenSolver<Matrix> eig(true_precision_at(truth, k, c), Eigen::EigenvaluesOnly);
          pd = eig.eigenvalues().minCoeff() > 0.0;
        }
        if (pd) break;
        if (++steps > kMaxDiagonalSteps)
          throw numerical_error("NonPD", "diagonal repair failed in FOV " + std::to_string(fov.fov_id));
        truth.diagonals.col(k).array() += 0.2;
      }
    }
  }
}

Matrix true_precision_at(const GroundTruth& truth, int k, Eigen::Index n) {
  Matrix omega = Matrix::Zero(truth.config.p, truth.config.p);
  omega.diagonal() = truth.diagonals.col(k);
  for (const auto& f : truth.functions) {
    if (f.fov != k) continue;
    omega(f.i, f.j) = f.values(n);
    omega(f.j, f.i) = f.values(n);
  }
  return omega;
}

SpatialDataset sample_expression(const GroundTruth& truth, const SpatialDataset& geometry, std::uint64_t seed) {
  SpatialDataset out = geometry;
  const int p = truth.config.p;
  std::normal_distribution<double> normal;
  for (int k = 0; k < out.num_fovs(); ++k) {
    auto rng = stream_engine(seed, {kExpressionStream, static_cast<std::uint64_t>(k)});
    auto& fov = out.fovs[k];
    fov.expression.resize(fov.num_cells(), p);
    Vector z(p);
    for (Eigen::Index c = 0; c < fov.num_cells(); ++c) {
      Eigen::LLT<Matrix> llt(true_precision_at(truth, k, c));
      if (llt.info() != Eigen::Success)
        throw numerical_error("NonPD", "precision not PD at cell " + std::to_string(fov.cell_ids[c]));
      for (int g = 0; g < p; ++g) z(g) = normal(rng);
      // Omega = L L' so L'^{-1} z has covariance Omega^{-1}.
      fov.expression.row(c) = llt.matrixU().solve(z).transpose();
    }
  }
  return out;
}

Simulation simulate(const SimConfig& config) {
  Simulation sim;
  const SpatialDataset geometry = generate_geometry(config);
  sim.truth = generate_selection(config, geometry);
  build_precision_surfaces(sim.truth, geometry);
  sim.data = sample_expression(sim.truth, geometry, config.seed);
  return sim;
}

void write_truth_edges(const GroundTruth& truth, const SpatialDataset& data, const std::filesystem::path& path) {
  auto out = csv::open_write(path);
  out << "fov,gene_i,gene_j\n";
  for (std::size_t k = 0; k < truth.edges.size(); ++k)
    for (auto [i, j] : truth.edges[k])
      out << data.fovs[k].fov_id << ',' << data.gene_names[i] << ',' << data.gene_names[j] << '\n';
}

}  // namespace msgr
