#include "msgr/error.hpp"
#include "msgr/simulate.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace msgr;

namespace {

SimConfig small_config(std::uint64_t seed) {
  SimConfig c;
  c.seed = seed;
  c.cells_per_fov = 10;
  return c;
}

std::size_t edge_count(const GroundTruth& t) {
  std::size_t n = 0;
  for (const auto& e : t.edges) n += e.size();
  return n;
}

void audit_pd(const Simulation& sim) {
  for (int k = 0; k < sim.data.num_fovs(); ++k)
    for (Eigen::Index c = 0; c < sim.data.fovs[k].num_cells(); ++c)
      REQUIRE(Eigen::LLT<Matrix>(true_precision_at(sim.truth, k, c)).info() == Eigen::Success);
}

}  // namespace

TEST_SUITE("simulate") {

TEST_CASE("geometry") {
  SimConfig c;
  c.grid_rows = 5;
  c.grid_cols = 5;
  c.cells_per_fov = 1000;
  const auto g = generate_geometry(c);
  CHECK(g.num_fovs() == 25);
  std::set<std::int64_t> ids;
  for (int k = 0; k < 25; ++k) {
    const auto& f = g.fovs[k];
    CHECK(f.fov_id == k + 1);
    CHECK(f.num_cells() == 1000);
    CHECK(f.expression.cols() == c.p);
    // cells lie inside the FOV square and are distinct lattice points
    const double x0 = (k % 5) * 1.0, y0 = (k / 5) * 1.0;
    CHECK(f.coordinates.col(0).minCoeff() > x0);
    CHECK(f.coordinates.col(0).maxCoeff() < x0 + 0.4);
    CHECK(f.coordinates.col(1).minCoeff() > y0);
    CHECK(f.coordinates.col(1).maxCoeff() < y0 + 0.4);
    std::set<std::pair<double, double>> pts;
    for (Eigen::Index n = 0; n < f.num_cells(); ++n) pts.emplace(f.coordinates(n, 0), f.coordinates(n, 1));
    CHECK(pts.size() == 1000);
    ids.insert(f.cell_ids.begin(), f.cell_ids.end());
  }
  CHECK(ids.size() == 25000);

  c.grid_rows = c.grid_cols = 1;
  CHECK(generate_geometry(c).num_fovs() == 1);
  const auto a = generate_geometry(small_config(9));
  const auto b = generate_geometry(small_config(9));
  for (int k = 0; k < a.num_fovs(); ++k) CHECK(a.fovs[k].coordinates == b.fovs[k].coordinates);
}

TEST_CASE("configuration validation") {
  SimConfig c;
  c.sparsity = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = SimConfig{};
  c.rho_decay = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = SimConfig{};
  c.cells_per_fov = 1601;
  try {
    c.validate();
    FAIL("expected TooManyCells");
  } catch (const Error& e) {
    CHECK(e.code() == "TooManyCells");
  }
}

TEST_CASE("realized density over 50 seeds") {
  SimConfig c = small_config(0);
  c.p = 30;
  c.grid_rows = c.grid_cols = 5;
  double lo = 1.0, hi = 0.0;
  for (std::uint64_t s = 1; s <= 50; ++s) {
    c.seed = s;
    const auto geo = generate_geometry(c);
    const auto t = generate_selection(c, geo);
    const double density = static_cast<double>(edge_count(t)) / (435.0 * 25.0);
    lo = std::min(lo, density);
    hi = std::max(hi, density);
    for (const auto& e : t.edges)
      for (auto [i, j] : e) CHECK(i < j);
  }
  CHECK(lo >= 0.03);
  CHECK(hi <= 0.07);
  CHECK(lo >= 0.05 * 0.6);
  CHECK(hi <= 0.05 * 1.4);
}

TEST_CASE("selection concordance follows the FOV correlation") {
  SimConfig c = small_config(3);
  c.p = 30;
  c.rho_decay = 0.999999;
  const auto geo = generate_geometry(c);
  const auto t = generate_selection(c, geo);
  // nearly identical latents: at most the threshold pair is split across FOVs
  int mixed = 0;
  for (int i = 0; i < c.p; ++i)
    for (int j = i + 1; j < c.p; ++j) {
      int in = 0;
      for (const auto& e : t.edges) in += std::count(e.begin(), e.end(), std::pair<int, int>(i, j)) > 0;
      if (in > 0 && in < geo.num_fovs()) ++mixed;
    }
  CHECK(mixed <= 1);

  // near-independent FOVs: joint selection rate matches the squared marginal
  c.rho_decay = 1e-6;
  c.grid_rows = 1;
  c.grid_cols = 2;
  double both = 0.0, n = 0.0, marg = 0.0;
  for (std::uint64_t s = 1; s <= 200; ++s) {
    c.seed = s;
    const auto g2 = generate_geometry(c);
    const auto t2 = generate_selection(c, g2);
    std::set<std::pair<int, int>> a(t2.edges[0].begin(), t2.edges[0].end());
    for (auto e : t2.edges[1]) both += a.count(e);
    marg += static_cast<double>(t2.edges[0].size() + t2.edges[1].size()) / 2.0;
    n += 435.0;
  }
  const double m = marg / n;
  const double joint = both / n;
  const double se = std::sqrt(m * m * (1 - m * m) / n);
  CHECK(std::abs(joint - m * m) <= 3.0 * se);
}

TEST_CASE("no edges gives diagonal precision") {
  SimConfig c = small_config(1);
  c.p = 3;
  c.sparsity = 1e-4;
  const Simulation sim = simulate(c);
  CHECK(edge_count(sim.truth) == 0);
  for (int k = 0; k < sim.data.num_fovs(); ++k) {
    const Matrix om = true_precision_at(sim.truth, k, 0);
    CHECK(om.isDiagonal());
  }
}

TEST_CASE("Scenario I surfaces are PD and nonzero") {
  for (std::uint64_t s = 1; s <= 3; ++s) {
    SimConfig c;
    c.seed = s;
    const Simulation sim = simulate(c);
    audit_pd(sim);
    CHECK(sim.truth.functions.size() == edge_count(sim.truth));
    for (const auto& f : sim.truth.functions) {
      CHECK(f.values.cwiseAbs().maxCoeff() > 0.0);
      CHECK(std::abs(f.amplitude) >= 0.3);
      CHECK(std::abs(f.amplitude) <= 0.6);
      const Point s0 = sim.data.fovs[f.fov].coordinates.row(0).transpose();
      CHECK(sim.truth.edge_value(f, s0) == f.values(0));
    }
  }
}

TEST_CASE("Scenario II retention and PD repair") {
  SimConfig c;
  c.scenario = Scenario::II;
  c.cells_per_fov = 100;
  c.sparsity = 0.1;
  const Simulation sim = simulate(c);
  audit_pd(sim);
  REQUIRE(!sim.truth.functions.empty());
  for (const auto& f : sim.truth.functions) {
    CHECK(f.form == -1);
    CHECK(f.pre_scale_max > 0.5);
    CHECK(f.values.cwiseAbs().maxCoeff() == doctest::Approx(2.0 * f.pre_scale_max));
  }
}

TEST_CASE("expression sampling") {
  SimConfig c;
  c.p = 2;
  c.grid_rows = c.grid_cols = 1;
  c.candidate_grid = 100;
  c.cells_per_fov = 10000;
  const auto geo = generate_geometry(c);
  GroundTruth t;
  t.config = c;
  t.edges.assign(1, {});
  t.diagonals = Matrix::Constant(2, 1, 4.0);
  const auto d = sample_expression(t, geo, 5);
  const Matrix& y = d.fovs[0].expression;
  for (int g = 0; g < 2; ++g) {
    const double mean = y.col(g).mean();
    const double var = (y.col(g).array() - mean).square().sum() / (y.rows() - 1);
    CHECK(var == doctest::Approx(0.25).epsilon(0.05));
    CHECK(std::abs(mean) <= 5.0 * std::sqrt(0.25 / y.rows()));
  }
  const auto again = sample_expression(t, geo, 5);
  CHECK(again.fovs[0].expression == y);

  // omega_12 = -0.8 < 0 gives a positive correlation
  TrueEdgeFunction f;
  f.i = 0;
  f.j = 1;
  f.values = Vector::Constant(10000, -0.8);
  t.functions = {f};
  t.diagonals.setOnes();
  const auto corr = sample_expression(t, geo, 6);
  const Matrix& z = corr.fovs[0].expression;
  const double r = (z.col(0).array() * z.col(1).array()).mean() /
                   std::sqrt(z.col(0).squaredNorm() / 10000 * z.col(1).squaredNorm() / 10000);
  CHECK(r == doctest::Approx(0.8).epsilon(0.05));
}

TEST_CASE("simulated data is centered and reproducible") {
  SimConfig c;
  c.seed = 4;
  const Simulation a = simulate(c);
  const Simulation b = simulate(c);
  CHECK(a.truth.edges == b.truth.edges);
  CHECK(a.truth.latent == b.truth.latent);
  for (int k = 0; k < a.data.num_fovs(); ++k) {
    CHECK(a.data.fovs[k].expression == b.data.fovs[k].expression);
    const Matrix& y = a.data.fovs[k].expression;
    for (int g = 0; g < c.p; ++g) {
      const double mean = y.col(g).mean();
      const double sd = std::sqrt((y.col(g).array() - mean).square().mean());
      CHECK(std::abs(mean) <= 5.0 * sd / std::sqrt(static_cast<double>(y.rows())));
    }
  }
  c.seed = 5;
  CHECK(simulate(c).truth.latent != a.truth.latent);
}

TEST_CASE("truth edge file") {
  SimConfig c = small_config(2);
  const Simulation sim = simulate(c);
  const auto dir = test::scratch_dir("sim_truth");
  write_truth_edges(sim.truth, sim.data, dir / "t.csv");
  const auto back = read_edges_csv(dir / "t.csv", {1, 2, 3, 4, 5, 6, 7, 8, 9}, sim.data.gene_names);
  CHECK(back == sim.truth.edges);
  CHECK(std::string(scenario_name(Scenario::II)) == "II");
}

}  // TEST_SUITE
