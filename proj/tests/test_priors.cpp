#include "msgr/error.hpp"
#include "msgr/normal.hpp"
#include "msgr/priors.hpp"
#include "msgr/simulate.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace msgr;

namespace {

FovGeometry line_geometry(const std::vector<double>& xs) {
  FovGeometry g;
  const auto K = static_cast<Eigen::Index>(xs.size());
  g.centroids.resize(K, 2);
  for (Eigen::Index k = 0; k < K; ++k) g.centroids.row(k) << xs[k], 0.0;
  g.distances.resize(K, K);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index l = 0; l < K; ++l) g.distances(k, l) = std::abs(xs[k] - xs[l]);
  return g;
}

FovGeometry grid_geometry(int rows, int cols) {
  SimConfig cfg;
  cfg.grid_rows = rows;
  cfg.grid_cols = cols;
  cfg.cells_per_fov = cfg.candidate_grid * cfg.candidate_grid;
  return fov_geometry(generate_geometry(cfg));
}

}  // namespace

TEST_SUITE("priors") {

TEST_CASE("FOV correlation entries") {
  const auto g = line_geometry({0.0, 2.0, 3.0});
  const Matrix v = build_fov_correlation(g, 0.6);
  for (int k = 0; k < 3; ++k) CHECK(v(k, k) == 1.0);
  CHECK(v(0, 1) == doctest::Approx(0.36).epsilon(1e-14));
  CHECK(v(1, 2) == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(v == v.transpose());

  const Matrix split = build_fov_correlation(g, 0.6, std::vector<std::string>{"a", "b", "b"});
  CHECK(split(0, 1) == 0.0);
  CHECK(split(0, 2) == 0.0);
  CHECK(split(1, 2) == doctest::Approx(0.6));
  CHECK_THROWS_AS(build_fov_correlation(g, 1.0), Error);
  CHECK_THROWS_AS(build_fov_correlation(g, 0.5, std::vector<std::string>{"a"}), Error);
}

TEST_CASE("FOV correlation is PSD and permutation equivariant") {
  const auto g = grid_geometry(3, 3);
  const std::vector<std::string> regions{"a", "a", "b", "a", "b", "b", "a", "b", "a"};
  const Matrix v = build_fov_correlation(g, 0.9, regions);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(v);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  CHECK(v.diagonal().isOnes(0.0));

  std::vector<int> perm{4, 0, 8, 2, 6, 1, 3, 7, 5};
  FovGeometry pg;
  pg.centroids.resize(9, 2);
  pg.distances.resize(9, 9);
  std::vector<std::string> pregions(9);
  for (int a = 0; a < 9; ++a) {
    pg.centroids.row(a) = g.centroids.row(perm[a]);
    pregions[a] = regions[perm[a]];
    for (int b = 0; b < 9; ++b) pg.distances(a, b) = g.distances(perm[a], perm[b]);
  }
  const Matrix pv = build_fov_correlation(pg, 0.9, pregions);
  for (int a = 0; a < 9; ++a)
    for (int b = 0; b < 9; ++b) CHECK(pv(a, b) == doctest::Approx(v(perm[a], perm[b])).epsilon(1e-12));
}

TEST_CASE("prior assembly and cached factorizations") {
  SimConfig cfg;
  cfg.p = 4;
  cfg.cells_per_fov = 10;
  const auto geo = generate_geometry(cfg);
  Hyperparams hp;
  const FovPrior prior = build_fov_prior(geo, fov_geometry(geo), hp);
  CHECK(prior.U.isIdentity());
  CHECK((prior.V * prior.V_inv).isIdentity(1e-10));
  CHECK((prior.V_basis * prior.V_spectrum.asDiagonal() * prior.V_basis.transpose()).isApprox(prior.V, 1e-12));
  CHECK(prior.mean(0, 2).isZero());
  CHECK(prior.sigma_lambda_sq == doctest::Approx(0.02));

  FovPrior dup;
  dup.V = Matrix::Ones(2, 2);
  CHECK_THROWS_AS(dup.prepare(), Error);
}

TEST_CASE("Moran's I: gradient is positive, i.i.d. sits near -1/(K-1)") {
  const auto g = grid_geometry(5, 5);
  const Matrix w = (-g.distances.array().square() / 2.0).exp();
  Vector gradient(25);
  for (int k = 0; k < 25; ++k) gradient(k) = g.centroids(k, 0);
  CHECK(morans_i(gradient, w) > 0.0);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  double sum = 0.0;
  std::vector<double> clamped;
  for (int t = 0; t < 1000; ++t) {
    Vector v(25);
    for (auto& x : v) x = n(rng);
    const double i = morans_i(v, w);
    sum += i;
    clamped.push_back(std::clamp(i, 0.01, 0.99));
  }
  CHECK(std::abs(sum / 1000.0 - (-1.0 / 24.0)) < 0.01);
  std::nth_element(clamped.begin(), clamped.begin() + 500, clamped.end());
  CHECK(clamped[500] <= 0.05);
}

TEST_CASE("rho estimate needs three FOVs") {
  SimConfig cfg;
  cfg.grid_rows = 1;
  cfg.grid_cols = 2;
  cfg.cells_per_fov = 5;
  const Simulation sim = simulate(cfg);
  try {
    estimate_rho_decay(sim.data, fov_geometry(sim.data));
    FAIL("expected DegenerateInput");
  } catch (const Error& e) {
    CHECK(e.code() == "DegenerateInput");
  }
  cfg.grid_cols = 3;
  const Simulation sim3 = simulate(cfg);
  const double r = estimate_rho_decay(sim3.data, fov_geometry(sim3.data));
  CHECK(r >= 0.01);
  CHECK(r <= 0.99);
}

TEST_CASE("marginal inclusion probability") {
  for (double s : {0.0, 1.0, 5.0, 123.0}) CHECK(marginal_inclusion_prob(0.0, s) == 0.5);
  CHECK(marginal_inclusion_prob(1.96, 0.0) == doctest::Approx(0.9750).epsilon(1e-4));
  CHECK(marginal_inclusion_prob(-60.0, 1.0) < 1e-300);
  double prev = 0.0;
  for (double m = -4.0; m <= 4.0; m += 0.5) {
    const double v = marginal_inclusion_prob(m, 2.0);
    CHECK(v > prev);
    prev = v;
  }
  for (double m : {0.5, 1.0, 3.0}) {
    double before = 1.0;
    for (double s : {0.0, 0.5, 1.0, 2.0, 5.0, 20.0}) {
      const double v = marginal_inclusion_prob(m, s);
      CHECK(v < before);
      before = v;
    }
  }
}

TEST_CASE("marginal inclusion matches latent Monte Carlo") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n;
  for (double m : {-1.0, 1.0}) {
    for (double s : {1.0, 5.0}) {
      long hits = 0;
      const long draws = 200000;
      for (long t = 0; t < draws; ++t) hits += (m + std::sqrt(s) * n(rng) + n(rng)) > 0.0;
      CHECK(static_cast<double>(hits) / draws == doctest::Approx(marginal_inclusion_prob(m, s)).epsilon(0.01));
    }
  }
}

TEST_CASE("joint inclusion probability") {
  const auto indep = joint_inclusion_prob({0, 0}, Eigen::Matrix2d::Identity(), 200000, 3);
  CHECK(std::abs(indep.value - 0.25) < 3.0 * indep.std_error + 1e-12);

  Eigen::Matrix2d c;
  c << 1, 0.9, 0.9, 1;
  const auto corr = joint_inclusion_prob({0, 0}, c, 200000, 3);
  CHECK(corr.value > 0.25 + 3.0 * corr.std_error);

  const auto sat = joint_inclusion_prob({10, 10}, c, 10000, 3);
  CHECK(sat.value == doctest::Approx(1.0).epsilon(1e-12));

  // singular covariance is accepted
  Eigen::Matrix2d one = Eigen::Matrix2d::Ones();
  CHECK_NOTHROW(joint_inclusion_prob({0.3, -0.3}, one, 1000, 1));
}

TEST_CASE("joint inclusion dominates the product of marginals under positive association") {
  for (double r : {0.0, 0.3, 0.6, 0.95}) {
    for (double m : {-1.0, 0.0, 1.5}) {
      Eigen::Matrix2d c;
      c << 1, r, r, 1;
      const auto j = joint_inclusion_prob({m, m}, c, 100000, 9);
      // E Phi(lambda) for lambda ~ N(m, 1) equals the marginal at sigma^2 = 1
      const double prod = std::pow(marginal_inclusion_prob(m, 1.0), 2);
      CHECK(j.value >= prod - 3.0 * j.std_error);
    }
  }
}

}  // TEST_SUITE
