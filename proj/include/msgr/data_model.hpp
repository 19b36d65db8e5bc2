#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace msgr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Point = Eigen::Vector2d;

/// One field of view: N_k cells with 2-D locations and p expression values each.
struct FovBlock {
  int fov_id = 0;
  std::vector<std::int64_t> cell_ids;
  Eigen::MatrixX2d coordinates;  // N_k x 2
  Matrix expression;             // N_k x p
  Point centroid = Point::Zero();  // mean of the original (unscaled) coordinates

  Eigen::Index num_cells() const { return expression.rows(); }
};

/// Cells of a tissue slide partitioned into fields of view (FOVs).
///
/// Gene indices everywhere refer to the column order of `gene_names`. FOVs are
/// stored in ascending `fov_id` order; position in `fovs` is the FOV index k.
struct SpatialDataset {
  std::vector<FovBlock> fovs;
  std::vector<std::string> gene_names;
  std::map<int, std::string> region_labels;  // fov_id -> region; empty if none
  // Divisor applied by scale_coordinates (1 and false for raw data).
  double coordinate_scale = 1.0;
  bool scaled = false;

  int num_genes() const { return static_cast<int>(gene_names.size()); }
  int num_fovs() const { return static_cast<int>(fovs.size()); }
  Eigen::Index total_cells() const;

  /// Throws Error(Data) if any structural invariant is violated.
  void validate() const;
};

struct Hyperparams {
  double a_omega = 10.0;
  double b_omega = 10.0;
  double sigma_gp_sq = 1.0;
  double a_gp = 0.01;
  double b_gp = 0.5;
  int degree = 10;
  double rho_decay = 0.6;
  double sigma_lambda_sq = 1.0 / 50.0;
  // Prior mean of the selection latents; a scalar unless per-node matrices are given.
  double prior_mean = 0.0;
  std::vector<Matrix> prior_mean_M;  // optional: p matrices of size K x (p-1)
  std::optional<Matrix> prior_U;     // optional (p-1) x (p-1) SPD; identity if unset
  double alpha_fdr = 0.1;
  double learning_rate = 0.9;
  double tol = 1e-3;
  int max_iter = 500;

  int num_basis() const { return (degree + 1) * (degree + 2) / 2; }

  /// Throws Error(Config) naming the first out-of-range field.
  void validate() const;
};

struct FovGeometry {
  Eigen::MatrixX2d centroids;  // K x 2
  Matrix distances;            // K x K Euclidean
};

SpatialDataset load_dataset(const std::filesystem::path& expression_path,
                            const std::filesystem::path& coords_path,
                            const std::string& fov_column = "fov");

/// Reads `fov,region` rows into dataset.region_labels.
void load_region_labels(SpatialDataset& dataset, const std::filesystem::path& path);

/// Writes the two CSV files read by load_dataset (cells in FOV order).
void save_dataset(const SpatialDataset& dataset, const std::filesystem::path& expression_path,
                  const std::filesystem::path& coords_path);

enum class CoordinateScaling {
  Global,     // divisor: sd of the raw coordinates over all cells of the slide
  FovPooled,  // divisor: pooled sd of the FOV-centered coordinates (unit spread after scaling)
};

/// Centers each FOV at its centroid and divides every coordinate by one common
/// standard deviation (see CoordinateScaling). Centroids keep their original units.
/// A dataset whose cells all sit on their FOV centroids (e.g. one cell) maps to the
/// origin with divisor 1; any other zero-spread geometry is DegenerateGeometry.
SpatialDataset scale_coordinates(const SpatialDataset& dataset, CoordinateScaling mode = CoordinateScaling::Global);

FovGeometry fov_geometry(const SpatialDataset& dataset);

}  // namespace msgr
