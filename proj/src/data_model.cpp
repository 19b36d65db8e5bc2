#include "msgr/data_model.hpp"

#include "msgr/csv.hpp"
#include "msgr/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace msgr {

namespace csv {

int Table::column(std::string_view name) const {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return static_cast<int>(c);
  }
  return -1;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  for (auto& c : out) {
    auto b = c.find_first_not_of(" \t");
    auto e = c.find_last_not_of(" \t");
    c = (b == std::string::npos) ? std::string() : c.substr(b, e - b + 1);
  }
  return out;
}

}  // namespace

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("IoError", "cannot open " + path.string());
  Table table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!have_header) {
      table.header = split(line);
      have_header = true;
    } else {
      table.rows.push_back(split(line));
    }
  }
  if (!have_header) throw data_error("IoError", "empty file " + path.string());
  return table;
}

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec == std::errc::result_out_of_range) {
    out = std::strtod(std::string(text).c_str(), nullptr);
    return true;
  }
  return ec == std::errc() && ptr == text.data() + text.size();
}

bool parse_int(std::string_view text, long long& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::string format(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, ptr);
}

std::ofstream open_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw data_error("IoError", "cannot write " + path.string());
  return out;
}

}  // namespace csv

Eigen::Index SpatialDataset::total_cells() const {
  Eigen::Index n = 0;
  for (const auto& f : fovs) n += f.num_cells();
  return n;
}

void SpatialDataset::validate() const {
  if (num_genes() < 2) throw data_error("ShapeMismatch", "need at least 2 genes");
  if (fovs.empty()) throw data_error("ShapeMismatch", "dataset has no fields of view");
  std::set<int> seen;
  for (const auto& f : fovs) {
    if (!seen.insert(f.fov_id).second)
      throw data_error("ShapeMismatch", "duplicate fov id " + std::to_string(f.fov_id));
    if (f.num_cells() < 1)
      throw data_error("ShapeMismatch", "fov " + std::to_string(f.fov_id) + " has no cells");
    if (f.coordinates.rows() != f.expression.rows())
      throw data_error("ShapeMismatch",
                       "fov " + std::to_string(f.fov_id) + ": coordinate/expression row counts differ");
    if (f.expression.cols() != num_genes())
      throw data_error("ShapeMismatch", "fov " + std::to_string(f.fov_id) + ": expected " +
                                            std::to_string(num_genes()) + " expression columns");
    if (!f.coordinates.allFinite() || !f.expression.allFinite())
      throw data_error("NonFiniteValue", "fov " + std::to_string(f.fov_id) + " contains non-finite values");
  }
}

void Hyperparams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw config_error("InvalidHyperparameter", what);
  };
  require(a_omega > 0 && b_omega > 0, "a_omega and b_omega must be positive");
  require(sigma_gp_sq > 0, "sigma_gp_sq must be positive");
  require(a_gp > 0 && b_gp > 0, "a_gp and b_gp must be positive");
  require(degree >= 0, "degree must be nonnegative");
  require(rho_decay > 0 && rho_decay < 1, "rho_decay must lie in (0,1)");
  require(sigma_lambda_sq > 0, "sigma_lambda_sq must be positive");
  require(std::isfinite(prior_mean), "prior_mean must be finite");
  require(alpha_fdr > 0 && alpha_fdr <= 1, "alpha must lie in (0,1]");
  require(learning_rate > 0 && learning_rate <= 1, "learning_rate must lie in (0,1]");
  require(tol > 0, "tol must be positive");
  require(max_iter > 0, "max_iter must be positive");
  if (prior_U) {
    require(prior_U->rows() == prior_U->cols(), "U must be square");
    require(prior_U->isApprox(prior_U->transpose()), "U must be symmetric");
    Eigen::LLT<Matrix> llt(*prior_U);
    require(llt.info() == Eigen::Success, "U must be positive definite");
  }
}

namespace {

struct CellRow {
  int fov;
  std::vector<double> values;
  std::size_t line;
};

int require_column(const csv::Table& t, std::string_view name, const std::filesystem::path& path) {
  int c = t.column(name);
  if (c < 0) throw data_error("MissingColumn", path.string() + " lacks column '" + std::string(name) + "'");
  return c;
}

long long parse_int_cell(const std::string& s, const std::filesystem::path& path, std::size_t row,
                         std::string_view col) {
  long long v = 0;
  if (!csv::parse_int(s, v))
    throw data_error("ParseError", path.string() + " row " + std::to_string(row + 1) + " column " +
                                       std::string(col) + ": not an integer: '" + s + "'");
  return v;
}

double parse_value(const std::string& s, const std::filesystem::path& path, std::int64_t cell_id,
                   std::string_view col) {
  double v = 0;
  if (!csv::parse_double(s, v))
    throw data_error("ParseError", path.string() + " cell " + std::to_string(cell_id) + " column " +
                                       std::string(col) + ": not a number: '" + s + "'");
  if (!std::isfinite(v))
    throw data_error("NonFiniteValue", path.string() + " cell " + std::to_string(cell_id) + " column " +
                                           std::string(col) + " is non-finite");
  return v;
}

}  // namespace

SpatialDataset load_dataset(const std::filesystem::path& expression_path,
                            const std::filesystem::path& coords_path, const std::string& fov_column) {
  csv::Table expr = csv::read(expression_path);
  csv::Table coords = csv::read(coords_path);

  const int e_id = require_column(expr, "cell_id", expression_path);
  const int e_fov = require_column(expr, fov_column, expression_path);
  const int c_id = require_column(coords, "cell_id", coords_path);
  const int c_x = require_column(coords, "x", coords_path);
  const int c_y = require_column(coords, "y", coords_path);

  SpatialDataset ds;
  std::vector<int> gene_cols;
  for (int c = 0; c < static_cast<int>(expr.header.size()); ++c) {
    if (c == e_id || c == e_fov) continue;
    gene_cols.push_back(c);
    ds.gene_names.push_back(expr.header[c]);
  }

  if (expr.rows.size() != coords.rows.size())
    throw data_error("ShapeMismatch", "expression has " + std::to_string(expr.rows.size()) +
                                          " cells but coordinates have " + std::to_string(coords.rows.size()));

  std::unordered_map<std::int64_t, Point> location;
  for (std::size_t r = 0; r < coords.rows.size(); ++r) {
    const auto& row = coords.rows[r];
    if (row.size() != coords.header.size())
      throw data_error("ShapeMismatch", coords_path.string() + " row " + std::to_string(r + 1) +
                                            " has wrong field count");
    auto id = parse_int_cell(row[c_id], coords_path, r, "cell_id");
    Point p(parse_value(row[c_x], coords_path, id, "x"), parse_value(row[c_y], coords_path, id, "y"));
    if (!location.emplace(id, p).second)
      throw data_error("ShapeMismatch", "duplicate cell_id " + std::to_string(id) + " in " + coords_path.string());
  }

  // Group cells by FOV, keeping file order within each FOV.
  std::map<int, std::vector<std::size_t>> by_fov;
  std::vector<std::int64_t> ids(expr.rows.size());
  for (std::size_t r = 0; r < expr.rows.size(); ++r) {
    const auto& row = expr.rows[r];
    if (row.size() != expr.header.size())
      throw data_error("ShapeMismatch", expression_path.string() + " row " + std::to_string(r + 1) +
                                            " has wrong field count");
    ids[r] = parse_int_cell(row[e_id], expression_path, r, "cell_id");
    by_fov[static_cast<int>(parse_int_cell(row[e_fov], expression_path, r, fov_column))].push_back(r);
  }

  const auto p = static_cast<Eigen::Index>(gene_cols.size());
  for (const auto& [fov_id, rows] : by_fov) {
    FovBlock block;
    block.fov_id = fov_id;
    const auto n = static_cast<Eigen::Index>(rows.size());
    block.coordinates.resize(n, 2);
    block.expression.resize(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto r = rows[i];
      const auto id = ids[r];
      auto it = location.find(id);
      if (it == location.end())
        throw data_error("ShapeMismatch", "cell " + std::to_string(id) + " has no coordinates");
      block.cell_ids.push_back(id);
      block.coordinates.row(i) = it->second.transpose();
      for (Eigen::Index g = 0; g < p; ++g)
        block.expression(i, g) = parse_value(expr.rows[r][gene_cols[g]], expression_path, id, ds.gene_names[g]);
    }
    block.centroid = block.coordinates.colwise().mean().transpose();
    ds.fovs.push_back(std::move(block));
  }
  ds.validate();
  return ds;
}

void load_region_labels(SpatialDataset& dataset, const std::filesystem::path& path) {
  csv::Table t = csv::read(path);
  const int c_fov = require_column(t, "fov", path);
  const int c_reg = require_column(t, "region", path);
  dataset.region_labels.clear();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto fov = static_cast<int>(parse_int_cell(t.rows[r].at(c_fov), path, r, "fov"));
    dataset.region_labels[fov] = t.rows[r].at(c_reg);
  }
  for (const auto& f : dataset.fovs) {
    if (!dataset.region_labels.count(f.fov_id))
      throw data_error("MissingColumn", "no region label for fov " + std::to_string(f.fov_id));
  }
}

void save_dataset(const SpatialDataset& dataset, const std::filesystem::path& expression_path,
                  const std::filesystem::path& coords_path) {
  std::ofstream e(expression_path), c(coords_path);
  if (!e) throw data_error("IoError", "cannot write " + expression_path.string());
  if (!c) throw data_error("IoError", "cannot write " + coords_path.string());
  e << "cell_id,fov";
  for (const auto& g : dataset.gene_names) e << ',' << g;
  e << '\n';
  c << "cell_id,fov,x,y\n";
  for (const auto& f : dataset.fovs) {
    for (Eigen::Index n = 0; n < f.num_cells(); ++n) {
      e << f.cell_ids[n] << ',' << f.fov_id;
      for (Eigen::Index g = 0; g < f.expression.cols(); ++g) e << ',' << csv::format(f.expression(n, g));
      e << '\n';
      c << f.cell_ids[n] << ',' << f.fov_id << ',' << csv::format(f.coordinates(n, 0)) << ','
        << csv::format(f.coordinates(n, 1)) << '\n';
    }
  }
}

SpatialDataset scale_coordinates(const SpatialDataset& dataset, CoordinateScaling mode) {
  SpatialDataset out = dataset;
  double sum_sq = 0.0;
  Eigen::Index count = 0;
  if (mode == CoordinateScaling::Global) {
    Point mean = Point::Zero();
    for (const auto& f : dataset.fovs) mean += f.coordinates.colwise().sum().transpose();
    mean /= static_cast<double>(dataset.total_cells());
    for (const auto& f : dataset.fovs) {
      sum_sq += (f.coordinates.rowwise() - mean.transpose()).squaredNorm();
      count += 2 * f.num_cells();
    }
  }
  for (auto& f : out.fovs) {
    const Point center = f.coordinates.colwise().mean().transpose();
    f.coordinates.rowwise() -= center.transpose();
    if (mode == CoordinateScaling::FovPooled) {
      sum_sq += f.coordinates.squaredNorm();
      count += 2 * f.num_cells();
    }
  }
  double sd = std::sqrt(sum_sq / static_cast<double>(count));
  if (!(sd > 0.0)) {
    if (dataset.total_cells() > 1)
      throw data_error("DegenerateGeometry", "coordinate standard deviation is zero");
    sd = 1.0;
  }
  for (auto& f : out.fovs) f.coordinates /= sd;
  out.coordinate_scale = dataset.coordinate_scale * sd;
  out.scaled = true;
  return out;
}

FovGeometry fov_geometry(const SpatialDataset& dataset) {
  const auto K = dataset.num_fovs();
  FovGeometry g;
  g.centroids.resize(K, 2);
  for (int k = 0; k < K; ++k) g.centroids.row(k) = dataset.fovs[k].centroid.transpose();
  g.distances.resize(K, K);
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l) g.distances(k, l) = (g.centroids.row(k) - g.centroids.row(l)).norm();
  return g;
}

}  // namespace msgr
