#include "msgr/data_model.hpp"
#include "msgr/error.hpp"
#include "msgr/simulate.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <functional>
#include <numeric>

using namespace msgr;
using msgr::test::scratch_dir;
using msgr::test::write_text;

namespace {

std::string error_code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

// Pooled over both axes, each centered at its own mean.
double global_sd(const SpatialDataset& d) {
  double sx = 0.0, sy = 0.0, sq = 0.0;
  Eigen::Index n = 0;
  for (const auto& f : d.fovs) {
    sx += f.coordinates.col(0).sum();
    sy += f.coordinates.col(1).sum();
    n += f.num_cells();
  }
  const double mx = sx / static_cast<double>(n), my = sy / static_cast<double>(n);
  for (const auto& f : d.fovs)
    sq += (f.coordinates.col(0).array() - mx).square().sum() + (f.coordinates.col(1).array() - my).square().sum();
  return std::sqrt(sq / static_cast<double>(2 * n));
}

}  // namespace

TEST_SUITE("data_model") {

TEST_CASE("three cells, two genes, one FOV") {
  const auto dir = scratch_dir("dm_small");
  write_text(dir / "expr.csv", "cell_id,fov,A,B\n1,7,0.5,1\n2,7,-1,2\n3,7,3,0\n");
  write_text(dir / "coords.csv", "cell_id,fov,x,y\n3,7,2,2\n1,7,0,0\n2,7,1,0\n");
  const SpatialDataset d = load_dataset(dir / "expr.csv", dir / "coords.csv");
  CHECK(d.num_fovs() == 1);
  CHECK(d.num_genes() == 2);
  CHECK(d.fovs[0].num_cells() == 3);
  CHECK(d.fovs[0].fov_id == 7);
  CHECK(d.gene_names == std::vector<std::string>{"A", "B"});
  // coordinates joined by cell id, not by row position
  CHECK(d.fovs[0].coordinates(2, 0) == 2.0);
  CHECK(d.fovs[0].expression(1, 0) == -1.0);
  CHECK(d.fovs[0].centroid.isApprox(Point(1.0, 2.0 / 3.0)));
}

TEST_CASE("NaN expression entry names the cell") {
  const auto dir = scratch_dir("dm_nan");
  write_text(dir / "expr.csv", "cell_id,fov,A,B\n1,1,0.5,1\n42,1,nan,2\n");
  write_text(dir / "coords.csv", "cell_id,fov,x,y\n1,1,0,0\n42,1,1,0\n");
  try {
    load_dataset(dir / "expr.csv", dir / "coords.csv");
    FAIL("expected NonFiniteValue");
  } catch (const Error& e) {
    CHECK(e.code() == "NonFiniteValue");
    CHECK(std::string(e.what()).find("42") != std::string::npos);
    CHECK(e.kind() == ErrorKind::Data);
  }
}

TEST_CASE("missing column and row-count mismatch") {
  const auto dir = scratch_dir("dm_bad");
  write_text(dir / "expr.csv", "cell_id,fov,A,B\n1,1,0.5,1\n2,1,1,2\n");
  write_text(dir / "coords_noy.csv", "cell_id,fov,x\n1,1,0\n2,1,1\n");
  write_text(dir / "coords_short.csv", "cell_id,fov,x,y\n1,1,0,0\n");
  CHECK(error_code_of([&] { load_dataset(dir / "expr.csv", dir / "coords_noy.csv"); }) == "MissingColumn");
  CHECK(error_code_of([&] { load_dataset(dir / "expr.csv", dir / "coords_short.csv"); }) == "ShapeMismatch");
  CHECK(error_code_of([&] { load_dataset(dir / "absent.csv", dir / "coords_short.csv"); }) == "IoError");
}

TEST_CASE("simulated dataset round-trips through CSV exactly") {
  SimConfig cfg;
  cfg.p = 4;
  cfg.grid_rows = 2;
  cfg.grid_cols = 2;
  cfg.cells_per_fov = 30;
  const Simulation sim = simulate(cfg);
  const auto dir = scratch_dir("dm_roundtrip");
  save_dataset(sim.data, dir / "e.csv", dir / "c.csv");
  const SpatialDataset back = load_dataset(dir / "e.csv", dir / "c.csv");
  REQUIRE(back.num_fovs() == sim.data.num_fovs());
  CHECK(back.gene_names == sim.data.gene_names);
  for (int k = 0; k < back.num_fovs(); ++k) {
    CHECK(back.fovs[k].fov_id == sim.data.fovs[k].fov_id);
    CHECK(back.fovs[k].cell_ids == sim.data.fovs[k].cell_ids);
    CHECK(back.fovs[k].coordinates == sim.data.fovs[k].coordinates);
    CHECK(back.fovs[k].expression == sim.data.fovs[k].expression);
  }
}

TEST_CASE("row order within a FOV permutes cells consistently") {
  const auto dir = scratch_dir("dm_perm");
  write_text(dir / "e1.csv", "cell_id,fov,A,B\n1,1,1,10\n2,1,2,20\n3,1,3,30\n");
  write_text(dir / "e2.csv", "cell_id,fov,A,B\n3,1,3,30\n1,1,1,10\n2,1,2,20\n");
  write_text(dir / "c.csv", "cell_id,fov,x,y\n1,1,0.1,0\n2,1,0.2,0\n3,1,0.3,0\n");
  const auto a = load_dataset(dir / "e1.csv", dir / "c.csv");
  const auto b = load_dataset(dir / "e2.csv", dir / "c.csv");
  for (Eigen::Index n = 0; n < 3; ++n) {
    const auto m = (n + 1) % 3;  // row n of a sits at row m of b
    CHECK(a.fovs[0].cell_ids[n] == b.fovs[0].cell_ids[m]);
    CHECK(a.fovs[0].coordinates.row(n) == b.fovs[0].coordinates.row(m));
    CHECK(a.fovs[0].expression.row(n) == b.fovs[0].expression.row(m));
  }
}

TEST_CASE("single cell scales to the origin") {
  Eigen::MatrixX2d c(1, 2);
  c << 5.0, 5.0;
  const auto d = test::make_dataset({c}, {Matrix::Ones(1, 2)});
  for (auto mode : {CoordinateScaling::Global, CoordinateScaling::FovPooled}) {
    const auto s = scale_coordinates(d, mode);
    CHECK(s.fovs[0].coordinates(0, 0) == 0.0);
    CHECK(s.fovs[0].coordinates(0, 1) == 0.0);
    CHECK(s.fovs[0].centroid == Point(5.0, 5.0));
  }
}

TEST_CASE("translated FOV layouts give identical micro-coordinates") {
  Eigen::MatrixX2d a(4, 2);
  a << 0, 0, 1, 0, 0, 2, 3, 1;
  Eigen::MatrixX2d b = a;
  b.col(0).array() += 100.0;
  b.col(1).array() -= 7.5;
  const auto d = test::make_dataset({a, b}, {Matrix::Ones(4, 2), Matrix::Ones(4, 2)});
  for (auto mode : {CoordinateScaling::Global, CoordinateScaling::FovPooled}) {
    const auto s = scale_coordinates(d, mode);
    CHECK((s.fovs[0].coordinates - s.fovs[1].coordinates).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("scaling divides by the sd of all raw coordinates") {
  SimConfig cfg;  // Scenario I desk geometry
  const auto geo = generate_geometry(cfg);
  const double raw_sd = global_sd(geo);
  const auto s = scale_coordinates(geo, CoordinateScaling::Global);
  CHECK(s.coordinate_scale == doctest::Approx(raw_sd).epsilon(1e-12));
  CHECK(s.scaled);
  // FOV-centered coordinates keep their within-FOV means at zero
  for (const auto& f : s.fovs) CHECK(f.coordinates.colwise().mean().norm() < 1e-12);
}

TEST_CASE("pooled scaling gives unit spread and is idempotent") {
  SimConfig cfg;
  const auto geo = generate_geometry(cfg);
  const auto s = scale_coordinates(geo, CoordinateScaling::FovPooled);
  CHECK(global_sd(s) == doctest::Approx(1.0).epsilon(1e-12));

  SpatialDataset again = s;
  for (auto& f : again.fovs) f.centroid = Point::Zero();
  const auto s2 = scale_coordinates(again, CoordinateScaling::FovPooled);
  for (int k = 0; k < s.num_fovs(); ++k)
    CHECK((s2.fovs[k].coordinates - s.fovs[k].coordinates).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("degenerate geometry") {
  Eigen::MatrixX2d c(3, 2);
  c.setConstant(2.0);
  const auto d = test::make_dataset({c}, {Matrix::Ones(3, 2)});
  CHECK(error_code_of([&] { scale_coordinates(d); }) == "DegenerateGeometry");
}

TEST_CASE("FOV geometry") {
  Eigen::MatrixX2d a(1, 2), b(1, 2);
  a << 0, 0;
  b << 3, 4;
  const auto one = fov_geometry(test::make_dataset({a}, {Matrix::Ones(1, 2)}));
  CHECK(one.distances.rows() == 1);
  CHECK(one.distances(0, 0) == 0.0);
  const auto two = fov_geometry(test::make_dataset({a, b}, {Matrix::Ones(1, 2), Matrix::Ones(1, 2)}));
  CHECK(two.distances(0, 1) == doctest::Approx(5.0));
  CHECK(two.distances(1, 0) == two.distances(0, 1));
}

TEST_CASE("5x5 grid with unit pitch") {
  SimConfig cfg;
  cfg.grid_rows = 5;
  cfg.grid_cols = 5;
  cfg.cells_per_fov = 1600;  // the full lattice, so centroids sit at the square centers
  const auto g = fov_geometry(generate_geometry(cfg));
  REQUIRE(g.distances.rows() == 25);
  // adjacent in a row and in a column
  CHECK(g.distances(0, 1) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(g.distances(0, 5) == doctest::Approx(1.0).epsilon(1e-9));
  for (int k = 0; k < 25; ++k) {
    CHECK(g.distances(k, k) == 0.0);
    for (int l = 0; l < 25; ++l)
      for (int m = 0; m < 25; m += 6) CHECK(g.distances(k, l) <= g.distances(k, m) + g.distances(m, l) + 1e-12);
  }
}

TEST_CASE("hyperparameter validation") {
  Hyperparams hp;
  CHECK_NOTHROW(hp.validate());
  CHECK(hp.num_basis() == 66);
  hp.rho_decay = 1.0;
  CHECK(error_code_of([&] { hp.validate(); }) == "InvalidHyperparameter");
  hp = Hyperparams{};
  hp.learning_rate = 0.0;
  CHECK_THROWS_AS(hp.validate(), Error);
  hp = Hyperparams{};
  hp.alpha_fdr = 1.0;
  CHECK_NOTHROW(hp.validate());
}

}  // TEST_SUITE
