// msgr: simulate, fit and evaluate multi-resolution spatial graphical regressions.

#include "msgr/cli_io.hpp"
#include "msgr/error.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <thread>

namespace {

using namespace msgr;

// Flag values; unset flags leave the config file (or defaults) untouched.
struct Flags {
  std::string config_file;
  std::optional<std::string> expression, coords, regions, pathways, out, metrics, scenario, scaling;
  std::vector<std::string> truth, fit;
  std::optional<double> alpha, a_gp, b_gp, sigma_gp, a_omega, b_omega, rho, sigma_lambda, tol, learning_rate;
  std::optional<double> sparsity, bandwidth, fov_size, fov_spacing;
  std::optional<int> degree, max_iter, threads, replicates, p, grid_rows, grid_cols, cells, candidate_grid;
  std::optional<std::uint64_t> seed;
  bool surfaces = false, verbose = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config_file, "JSON run configuration; flags override its values");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--threads", f.threads, "worker threads (results do not depend on it)");
  app->add_option("--seed", f.seed, "random seed");
  app->add_flag("--verbose", f.verbose, "progress log on stderr");
}

void add_model(CLI::App* app, Flags& f) {
  app->add_option("--expression", f.expression, "expression CSV (cell_id,fov,genes...)");
  app->add_option("--coords", f.coords, "coordinates CSV (cell_id,fov,x,y)");
  app->add_option("--regions", f.regions, "region labels CSV (fov,region)");
  app->add_option("--pathways", f.pathways, "gene sets CSV (pathway,gene) for connectivity scores");
  app->add_option("--alpha", f.alpha, "Bayesian FDR level");
  app->add_option("--degree", f.degree, "total polynomial degree of the GP basis");
  app->add_option("--a-gp", f.a_gp, "kernel origin attenuation a");
  app->add_option("--b-gp", f.b_gp, "kernel smoothness b");
  app->add_option("--sigma-gp", f.sigma_gp, "GP variance sigma_gp^2");
  app->add_option("--a-omega", f.a_omega, "Gamma shape of the noise precision prior");
  app->add_option("--b-omega", f.b_omega, "Gamma rate of the noise precision prior");
  app->add_option("--sigma-lambda", f.sigma_lambda, "latent prior variance sigma_Lambda^2");
  app->add_option("--tol", f.tol, "convergence tolerance (sup-norm)");
  app->add_option("--max-iter", f.max_iter, "maximum sweeps per node");
  app->add_option("--learning-rate", f.learning_rate, "damping weight of new values");
  app->add_option("--moran-bandwidth", f.bandwidth, "kernel bandwidth for the Moran's I estimate of rho");
  app->add_option("--coord-scaling", f.scaling, "global (default) or fov_pooled standard deviation divisor");
  app->add_flag("--surfaces", f.surfaces, "write per-cell edge surfaces");
}

void add_rho(CLI::App* app, Flags& f) {
  app->add_option("--rho", f.rho, "spatial decay of the FOV correlation (simulation and prior)");
}

void add_sim(CLI::App* app, Flags& f) {
  app->add_option("--p", f.p, "number of genes");
  app->add_option("--grid-rows", f.grid_rows, "FOV grid rows");
  app->add_option("--grid-cols", f.grid_cols, "FOV grid columns");
  app->add_option("--cells", f.cells, "cells per FOV");
  app->add_option("--sparsity", f.sparsity, "target edge density");
  app->add_option("--scenario", f.scenario, "I or II");
  app->add_option("--candidate-grid", f.candidate_grid, "lattice points per axis in a FOV");
  app->add_option("--fov-size", f.fov_size, "FOV side length");
  app->add_option("--fov-spacing", f.fov_spacing, "gap between FOVs");
  app->add_option("--replicates", f.replicates, "number of replicates (seeds seed, seed+1, ...)");
}

void add_eval(CLI::App* app, Flags& f) {
  app->add_option("--truth", f.truth, "simulation directory (repeatable)");
  app->add_option("--fit", f.fit, "fit output directory (repeatable, paired with --truth)");
  app->add_option("--metrics", f.metrics, "metrics CSV to append to (default <out>/metrics.csv)");
}

RunConfig build_config(const std::string& command, const Flags& f) {
  RunConfig c = f.config_file.empty() ? RunConfig{} : load_config_file(f.config_file);
  c.command = command;
  if (f.expression) c.expression = *f.expression;
  if (f.coords) c.coords = *f.coords;
  if (f.regions) c.regions = *f.regions;
  if (f.pathways) c.pathways = *f.pathways;
  if (f.out) c.out = *f.out;
  if (f.metrics) c.metrics = *f.metrics;
  if (!f.truth.empty()) c.truth_dirs.assign(f.truth.begin(), f.truth.end());
  if (!f.fit.empty()) c.fit_dirs.assign(f.fit.begin(), f.fit.end());
  auto& hp = c.hyperparams;
  if (f.alpha) hp.alpha_fdr = *f.alpha;
  if (f.degree) hp.degree = *f.degree;
  if (f.a_gp) hp.a_gp = *f.a_gp;
  if (f.b_gp) hp.b_gp = *f.b_gp;
  if (f.sigma_gp) hp.sigma_gp_sq = *f.sigma_gp;
  if (f.a_omega) hp.a_omega = *f.a_omega;
  if (f.b_omega) hp.b_omega = *f.b_omega;
  if (f.sigma_lambda) hp.sigma_lambda_sq = *f.sigma_lambda;
  if (f.tol) hp.tol = *f.tol;
  if (f.max_iter) hp.max_iter = *f.max_iter;
  if (f.learning_rate) hp.learning_rate = *f.learning_rate;
  if (f.bandwidth) c.moran_bandwidth = *f.bandwidth;
  if (f.scaling) c.coordinate_scaling = parse_coordinate_scaling(*f.scaling);
  if (f.rho) {
    c.rho = *f.rho;
    c.sim.rho_decay = *f.rho;
  }
  if (f.threads) c.threads = *f.threads;
  if (f.replicates) c.replicates = *f.replicates;
  if (f.seed) {
    c.seed = *f.seed;
    c.sim.seed = *f.seed;
  }
  if (f.p) c.sim.p = *f.p;
  if (f.grid_rows) c.sim.grid_rows = *f.grid_rows;
  if (f.grid_cols) c.sim.grid_cols = *f.grid_cols;
  if (f.cells) c.sim.cells_per_fov = *f.cells;
  if (f.sparsity) c.sim.sparsity = *f.sparsity;
  if (f.candidate_grid) c.sim.candidate_grid = *f.candidate_grid;
  if (f.fov_size) c.sim.fov_size = *f.fov_size;
  if (f.fov_spacing) c.sim.fov_spacing = *f.fov_spacing;
  if (f.scenario) {
    if (*f.scenario == "I" || *f.scenario == "1") c.sim.scenario = Scenario::I;
    else if (*f.scenario == "II" || *f.scenario == "2") c.sim.scenario = Scenario::II;
    else throw config_error("InvalidScenario", "scenario must be I or II");
  }
  if (f.surfaces) c.surfaces = true;
  if (f.verbose) c.verbose = true;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"msgr: multi-resolution spatially varying Gaussian graphical regression"};
  app.set_version_flag("--version", std::string(MSGR_VERSION));
  app.require_subcommand(1);
  Flags f;
  auto* sim = app.add_subcommand("simulate", "generate Scenario I/II datasets with ground truth");
  auto* fit = app.add_subcommand("fit", "fit the model and write network estimates");
  auto* eval = app.add_subcommand("evaluate", "score fitted edges against ground truth");
  auto* pipe = app.add_subcommand("pipeline", "simulate, fit and evaluate each replicate");
  for (auto* s : {sim, fit, eval, pipe}) add_common(s, f);
  add_sim(sim, f);
  add_rho(sim, f);
  add_model(fit, f);
  add_rho(fit, f);
  add_eval(eval, f);
  add_sim(pipe, f);
  add_model(pipe, f);
  add_rho(pipe, f);
  add_eval(pipe, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const std::string command = app.get_subcommands().front()->get_name();
    const RunConfig config = build_config(command, f);
    if (command == "simulate") cmd_simulate(config);
    else if (command == "fit") cmd_fit(config);
    else if (command == "evaluate") {
      for (const auto& m : cmd_evaluate(config))
        std::cout << "mcc " << m.mcc << " tpr " << m.tpr << " fpr " << m.fpr << " fdr " << m.fdr << '\n';
    } else {
      for (const auto& m : cmd_pipeline(config))
        std::cout << "mcc " << m.mcc << " tpr " << m.tpr << " fpr " << m.fpr << " fdr " << m.fdr << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "msgr: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "msgr: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
