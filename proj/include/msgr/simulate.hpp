#pragma once

#include "msgr/data_model.hpp"
#include "msgr/gp_basis.hpp"
#include "msgr/postprocess.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace msgr {

enum class Scenario { I, II };

struct SimConfig {
  int p = 15;
  int grid_rows = 3;
  int grid_cols = 3;
  int cells_per_fov = 300;
  double rho_decay = 0.6;
  double sparsity = 0.05;
  double fov_size = 0.4;
  double fov_spacing = 0.6;
  int candidate_grid = 40;
  Scenario scenario = Scenario::I;
  std::uint64_t seed = 1;

  int num_fovs() const { return grid_rows * grid_cols; }
  void validate() const;
};

/// Off-diagonal precision function of one true edge in one FOV.
struct TrueEdgeFunction {
  int fov = 0;
  int i = 0, j = 0;
  int form = -1;           // Scenario I bank index, -1 for a GP draw
  double amplitude = 0.0;  // signed; Scenario I: max |f|, Scenario II: factor applied to B w
  Vector gp_coef;          // Scenario II KL weights
  double pre_scale_max = 0.0;  // Scenario II: max |f| over the FOV before the final doubling
  Vector values;           // f at the cells of the FOV, in dataset order
};

struct GroundTruth {
  SimConfig config;
  std::vector<EdgeList> edges;            // per FOV
  Matrix latent;                          // pairs (i<j, lexicographic) x K
  std::vector<TrueEdgeFunction> functions;
  Matrix diagonals;                       // p x K, constant within a FOV
  Eigen::MatrixX2d fov_origins;           // lower-left corner of each FOV square
  GPBasis gp;                             // skeleton used by Scenario II

  /// omega_ij at an arbitrary point of FOV k for function f.
  double edge_value(const TrueEdgeFunction& f, const Point& s) const;
};

/// FOV grid (row-major ids 1..K) with cells drawn without replacement from a
/// regular candidate lattice; expression columns are zero.
SpatialDataset generate_geometry(const SimConfig& config);

/// Latents Lambda_ij ~ N(0, V) per pair; the round(sparsity * total) largest are selected.
GroundTruth generate_selection(const SimConfig& config, const SpatialDataset& geometry);

/// Fills functions and diagonals so that Omega(s) is PD at every cell.
void build_precision_surfaces(GroundTruth& truth, const SpatialDataset& geometry);

/// Omega at cell n of FOV k.
Matrix true_precision_at(const GroundTruth& truth, int k, Eigen::Index n);

/// Draws each cell independently from N(0, Omega(s)^{-1}).
SpatialDataset sample_expression(const GroundTruth& truth, const SpatialDataset& geometry, std::uint64_t seed);

struct Simulation {
  SpatialDataset data;
  GroundTruth truth;
};

Simulation simulate(const SimConfig& config);

/// `fov,gene_i,gene_j`
void write_truth_edges(const GroundTruth& truth, const SpatialDataset& data, const std::filesystem::path& path);

const char* scenario_name(Scenario s);

}  // namespace msgr
