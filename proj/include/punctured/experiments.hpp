#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "punctured/phi.hpp"
#include "punctured/rank_one.hpp"
#include "punctured/tensor.hpp"
#include "punctured/theory.hpp"

namespace punctured {

// Settings shared by every subcommand. Either `shape` or `ratios` + `n_total`
// fixes the tensor dimensions.
struct ExperimentConfig {
  std::optional<std::array<std::size_t, 3>> shape;
  std::optional<std::array<double, 3>> ratios;
  std::optional<std::size_t> n_total;

  double beta = 4.0;
  double epsilon = 0.25;
  std::vector<double> beta_grid;
  std::vector<double> epsilon_grid;

  int trials = 20;
  std::uint64_t seed = 0;
  std::optional<InitPolicy> init;  // subcommand default when unset
  int restarts = 1;                // random starts per trial, best sigma kept
  int screen_sweeps = 100;         // sweeps before the best random start is picked
  double tol = 1e-12;
  int max_iter = 10000;
  int threads = 1;

  std::filesystem::path out = ".";
  std::string format = "csv";

  int bins = 60;
  double eta = 1e-6;
  int points = 801;
  std::optional<double> x_min;
  std::optional<double> x_max;

  // derivative-check
  int fd_entries = 20;
  double fd_step = 1e-5;

  // validate: added to sigma before the structural-eigenpair check
  double inject_sigma_perturbation = 0.0;

  Shape3 resolve_shape() const;
  // Mode ratios from `ratios`, else from `shape`.
  std::array<double, 3> resolve_ratios() const;
  InitPolicy init_or(InitPolicy fallback) const { return init.value_or(fallback); }

  // Throws RangeError on out-of-domain values.
  void validate() const;
};

// Values present in `j` override `cfg`. Keys mirror the CLI flags
// (shape, ratios, n_total, beta, epsilon, beta_grid, epsilon_grid, trials,
// seed, init, restarts, screen_sweeps, tol, max_iter, threads, out, format, bins, eta,
// points, x_min, x_max, fd_entries, fd_step).
void apply_json(ExperimentConfig& cfg, const nlohmann::json& j);

// "a:b:step" (inclusive of b up to rounding) or "v1,v2,...".
std::vector<double> parse_grid(const std::string& text);
InitPolicy parse_init(const std::string& text);
std::string to_string(InitPolicy init);

struct Moments {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  double min = 0.0;
  double max = 0.0;
};

Moments moments(const std::vector<double>& values);

// Kolmogorov distance between the empirical law of `samples` and `cdf`.
double ks_distance(std::vector<double> samples, const std::function<double(double)>& cdf);

// CDF of the continuous part of the limiting law (the zero atom's Lorentzian
// is removed before integrating Im mbar / pi), normalized to 1.
class TheoryCdf {
public:
  TheoryCdf(const ModelParams& p, int points = 4001, double eta = 1e-6);
  double operator()(double x) const;

private:
  std::vector<double> grid_;
  std::vector<double> cdf_;
};

struct TrialResult {
  std::size_t trial = 0;
  bool ok = false;
  double sigma = 0.0;
  std::array<double, 3> alignment{0.0, 0.0, 0.0};
  int iterations = 0;
  std::string error;
};

// Draws (signal, noise, mask) from `rng`, solves for a critical point with the
// given init policy (random policies keep the largest sigma over `restarts`
// starts) and reports sigma and alignments.
struct TrialSpec {
  Shape3 shape;
  double beta;
  InitPolicy init;
  int restarts = 1;
  double tol = 1e-12;
  int max_iter = 10000;
  int screen_sweeps = 100;
};

TrialResult run_trial(const TrialSpec& spec, double epsilon, const RngSeed& rng);

// Critical point of `tm` from the given init. RandomUnit with restarts > 1
// screens that many starts together and polishes the one with largest sigma.
SolveOutcome solve_with_restarts(const Tensor3& tm, const SolverConfig& base, int restarts,
                                 const RngSeed& rng, int screen_sweeps = 100);

struct GridAggregate {
  double parameter = 0.0;  // beta or epsilon
  Moments sigma;
  std::array<Moments, 3> alignment;
  std::size_t completed = 0;
  std::size_t failed = 0;
  std::vector<TrialResult> rows;  // ordered by trial index
};

GridAggregate aggregate(double parameter, std::vector<TrialResult> rows);

// Runs trial t with RngSeed(seed, t) for every grid value; trials execute on
// `threads` workers (or in `order` when given) and are collected by index.
std::vector<GridAggregate> run_trials(const TrialSpec& spec, const std::vector<double>& epsilons,
                                      int trials, std::uint64_t seed, int threads,
                                      const std::vector<std::size_t>* order = nullptr);

struct EsdReport {
  CriticalPoint point;
  SpectrumResult spectrum;
  ESDHistogram histogram;
  std::size_t nonzero_count = 0;
  double ks_bulk = 0.0;  // bulk (no zeros, no structural values) vs theory
  double bulk_edge = 0.0;
};

// Generates T, B, solves, builds Phi and writes spectrum.csv, histogram.csv,
// density.csv and esd_summary.json into cfg.out.
EsdReport run_esd(const ExperimentConfig& cfg);

// Bulk eigenvalues: zeros and the 2 sigma / -sigma structural values removed.
std::vector<double> bulk_eigenvalues(const SpectrumResult& spectrum, double sigma);

// density.csv with columns x,density.
DensityCurve run_density(const ExperimentConfig& cfg);

struct SpikeCurveRow {
  double beta = 0.0;
  SpikePrediction theory;
  std::optional<GridAggregate> empirical;
};

// spike_curve.csv: beta,sigma_inf,q1,q2,q3,feasible and, with trials > 0,
// emp_sigma_mean,emp_q1_mean,emp_q2_mean,emp_q3_mean,emp_sigma_std,
// emp_q1_std,emp_q2_std,emp_q3_std,completed,failed.
std::vector<SpikeCurveRow> run_spike_curve(const ExperimentConfig& cfg);

struct EpsilonSweepRow {
  double epsilon = 0.0;
  SpikePrediction theory;
  GridAggregate empirical;
};

struct EpsilonSweep {
  std::vector<EpsilonSweepRow> rows;
  std::optional<double> epsilon_threshold;
};

// epsilon_sweep.csv, trials.csv and sweep_summary.json.
EpsilonSweep run_epsilon_sweep(const ExperimentConfig& cfg);

struct CheckEntry {
  std::string name;
  bool pass = false;
  double residual = 0.0;
  double tolerance = 0.0;
};

struct ValidationReport {
  std::vector<CheckEntry> checks;
  bool pass() const;
  nlohmann::json to_json() const;
};

ValidationReport run_validate(const ExperimentConfig& cfg);

struct DerivativeEntry {
  std::size_t i = 0, j = 0, k = 0;
  int mask_bit = 0;
  double prediction_norm = 0.0;  // max norm
  double fd_norm = 0.0;
  double rel_error = 0.0;
};

struct DerivativeCheck {
  CriticalPoint point;
  std::vector<DerivativeEntry> entries;
  double max_rel_error = 0.0;
};

// Resolvent prediction of d[u; v; w] / dN_ijk against central differences of
// re-solved critical points (step h, solver tol 1e-14, warm-started at the
// unperturbed solution).
DerivativeCheck derivative_check(const Shape3& shape, double beta, double epsilon, int entries,
                                 double h, std::uint64_t seed);

DerivativeCheck run_derivative_check(const ExperimentConfig& cfg);

}  // namespace punctured
