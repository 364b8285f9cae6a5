#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "punctured/errors.hpp"
#include "punctured/experiments.hpp"

using namespace punctured;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("punctured_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(ParseGrid, RangeAndList) {
  const auto g = parse_grid("0:1:0.25");
  ASSERT_EQ(g.size(), 5u);
  EXPECT_DOUBLE_EQ(g[4], 1.0);
  const auto h = parse_grid("0.05:1:0.05");
  ASSERT_EQ(h.size(), 20u);
  EXPECT_DOUBLE_EQ(h[2], 0.15);
  EXPECT_DOUBLE_EQ(h.back(), 1.0);
  EXPECT_EQ(parse_grid("1.5,2,3"), (std::vector<double>{1.5, 2.0, 3.0}));
  EXPECT_THROW(parse_grid("1:0:0.1"), RangeError);
  EXPECT_THROW(parse_grid("0:1:0"), RangeError);
  EXPECT_THROW(parse_grid("a,b"), RangeError);
}

TEST(Config, InitNamesRoundTrip) {
  for (InitPolicy p : {InitPolicy::Planted, InitPolicy::RandomUnit}) {
    EXPECT_EQ(parse_init(to_string(p)), p);
  }
  EXPECT_THROW(parse_init("spectral"), RangeError);
}

TEST(Config, JsonOverrides) {
  ExperimentConfig cfg;
  apply_json(cfg, nlohmann::json::parse(R"({"shape":[10,20,70],"beta":2.5,"epsilon_grid":"0.1:0.3:0.1",
                                            "trials":3,"init":"planted","threads":2})"));
  ASSERT_TRUE(cfg.shape);
  EXPECT_EQ((*cfg.shape)[2], 70u);
  EXPECT_EQ(cfg.beta, 2.5);
  EXPECT_EQ(cfg.epsilon_grid.size(), 3u);
  EXPECT_EQ(cfg.trials, 3);
  EXPECT_EQ(cfg.init, InitPolicy::Planted);
  EXPECT_EQ(cfg.threads, 2);
  EXPECT_EQ(cfg.epsilon, 0.25);  // untouched
}

TEST(Config, ShapeResolution) {
  ExperimentConfig cfg;
  cfg.ratios = std::array<double, 3>{0.1, 0.2, 0.7};
  cfg.n_total = 1000;
  EXPECT_EQ(cfg.resolve_shape(), Shape3(100, 200, 700));
  cfg.n_total = 999;
  const Shape3 s = cfg.resolve_shape();
  EXPECT_EQ(s.total(), 999u);
  cfg.shape = std::array<std::size_t, 3>{5, 6, 7};
  cfg.ratios.reset();
  EXPECT_NEAR(cfg.resolve_ratios()[1], 6.0 / 18.0, 1e-15);
}

TEST(Config, ValidateRejectsOutOfDomain) {
  auto bad = [](auto mutate) {
    ExperimentConfig cfg;
    mutate(cfg);
    return cfg;
  };
  EXPECT_NO_THROW(ExperimentConfig{}.validate());
  EXPECT_THROW(bad([](auto& c) { c.trials = -1; }).validate(), RangeError);
  EXPECT_THROW(bad([](auto& c) { c.restarts = 0; }).validate(), RangeError);
  EXPECT_THROW(bad([](auto& c) { c.threads = 0; }).validate(), RangeError);
  EXPECT_THROW(bad([](auto& c) { c.beta = -1; }).validate(), RangeError);
  EXPECT_THROW(bad([](auto& c) { c.epsilon = 1.5; }).validate(), RangeError);
  EXPECT_THROW(bad([](auto& c) { c.format = "parquet"; }).validate(), RangeError);
  EXPECT_THROW(bad([](auto& c) { c.beta_grid = {1.0, 0.5}; }).validate(), RangeError);
  EXPECT_THROW(bad([](auto& c) { c.epsilon_grid = {0.0, 0.5}; }).validate(), RangeError);
  EXPECT_THROW(bad([](auto& c) { c.ratios = std::array<double, 3>{0.5, 0.5, 0.5}; }).validate(), RangeError);
}

TEST(Moments, MatchesWelford) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd(2.0, 3.0);
  std::vector<double> xs(5000);
  oracle::Welford w;
  for (auto& x : xs) {
    x = nd(gen);
    w.add(x);
  }
  const Moments m = moments(xs);
  EXPECT_NEAR(m.mean, w.mean, 1e-12);
  EXPECT_NEAR(m.std, w.population_std(), 1e-12);
  EXPECT_EQ(m.min, *std::min_element(xs.begin(), xs.end()));
  EXPECT_EQ(m.max, *std::max_element(xs.begin(), xs.end()));
  const Moments one = moments({4.0});
  EXPECT_EQ(one.mean, 4.0);
  EXPECT_EQ(one.std, 0.0);
}

TEST(KsDistance, UniformSamples) {
  std::vector<double> xs;
  for (int n = 0; n < 100; ++n) xs.push_back((n + 0.5) / 100.0);
  const double d = ks_distance(xs, [](double x) { return std::clamp(x, 0.0, 1.0); });
  EXPECT_NEAR(d, 0.005, 1e-12);
  EXPECT_NEAR(ks_distance({0.0}, [](double x) { return x < 1 ? 0.0 : 1.0; }), 1.0, 1e-15);
}

TEST(TheoryCdf, CubicIsSemicircle) {
  const TheoryCdf cdf(ModelParams::cubic(0.25));
  const double r = oracle::cubic_edge(0.25);
  for (double x = -1.1 * r; x <= 1.1 * r; x += 0.05) EXPECT_NEAR(cdf(x), oracle::semicircle_cdf(x, r), 2e-3) << x;
}

TEST(Trials, DeterministicOutputs) {
  ExperimentConfig cfg;
  cfg.shape = std::array<std::size_t, 3>{6, 8, 10};
  cfg.beta = 5.0;
  cfg.epsilon_grid = {0.4, 0.8};
  cfg.trials = 4;
  cfg.seed = 17;
  cfg.out = scratch("det_a");
  run_epsilon_sweep(cfg);
  ExperimentConfig again = cfg;
  again.out = scratch("det_b");
  again.threads = 3;
  run_epsilon_sweep(again);
  for (const char* f : {"epsilon_sweep.csv", "trials.csv"}) {
    EXPECT_EQ(slurp(cfg.out / f), slurp(again.out / f)) << f;
    EXPECT_FALSE(slurp(cfg.out / f).empty());
  }
}

TEST(Trials, ExecutionOrderDoesNotChangeAggregates) {
  const TrialSpec spec{Shape3(5, 6, 7), 4.0, InitPolicy::RandomUnit, 2, 1e-12, 10000, 20};
  const std::vector<double> eps{0.5, 1.0};
  const auto a = run_trials(spec, eps, 6, 9, 1);
  std::vector<std::size_t> order(6);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(1));
  const auto b = run_trials(spec, eps, 6, 9, 2, &order);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t g = 0; g < a.size(); ++g) {
    EXPECT_NEAR(a[g].sigma.mean, b[g].sigma.mean, 1e-15);
    EXPECT_NEAR(a[g].sigma.std, b[g].sigma.std, 1e-15);
    for (int l = 0; l < 3; ++l) EXPECT_NEAR(a[g].alignment[l].mean, b[g].alignment[l].mean, 1e-15);
    EXPECT_EQ(a[g].completed, 6u);
  }
  order.push_back(6);
  EXPECT_THROW(run_trials(spec, eps, 6, 9, 1, &order), RangeError);
}

TEST(Trials, SharedSeedAcrossEpsilonKeepsSignalAndNoise) {
  const TrialSpec spec{Shape3(4, 5, 6), 3.0, InitPolicy::Planted, 1, 1e-12, 10000, 0};
  const TrialResult a = run_trial(spec, 1.0, RngSeed{4, 2});
  const TrialResult b = run_trial(spec, 1.0, RngSeed{4, 2});
  EXPECT_EQ(a.sigma, b.sigma);
  EXPECT_TRUE(a.ok);
}

TEST(Validate, AllChecksPassAndReportFormat) {
  const ValidationReport rep = run_validate(ExperimentConfig{});
  EXPECT_TRUE(rep.pass());
  EXPECT_GE(rep.checks.size(), 10u);
  for (const auto& c : rep.checks) EXPECT_TRUE(c.pass) << c.name << " " << c.residual << " > " << c.tolerance;
  const auto j = rep.to_json();
  EXPECT_TRUE(j.at("pass").get<bool>());
  for (const auto& c : j.at("checks")) {
    EXPECT_TRUE(c.contains("name") && c.contains("pass") && c.contains("residual") && c.contains("tolerance"));
  }
}

TEST(Validate, InjectedPerturbationIsDetected) {
  ExperimentConfig cfg;
  cfg.inject_sigma_perturbation = 1e-3;
  const ValidationReport rep = run_validate(cfg);
  EXPECT_FALSE(rep.pass());
  const auto it = std::find_if(rep.checks.begin(), rep.checks.end(),
                               [](const CheckEntry& c) { return c.name == "structural_top_eigenpair"; });
  ASSERT_NE(it, rep.checks.end());
  EXPECT_FALSE(it->pass);
}

TEST(Esd, PureNoiseBulkIsSymmetric) {
  ExperimentConfig cfg;
  cfg.shape = std::array<std::size_t, 3>{60, 60, 60};
  cfg.beta = 0.0;
  cfg.epsilon = 1.0;
  cfg.out = scratch("esd_noise");
  const EsdReport rep = run_esd(cfg);
  const std::vector<double> bulk = bulk_eigenvalues(rep.spectrum, rep.point.sigma);
  const Moments m = moments(bulk);
  double third = 0.0;
  for (double x : bulk) third += std::pow((x - m.mean) / m.std, 3);
  third /= static_cast<double>(bulk.size());
  EXPECT_LT(std::abs(third), 0.05);
  for (const char* f : {"spectrum.csv", "histogram.csv", "density.csv", "esd_summary.json"}) {
    EXPECT_TRUE(fs::exists(cfg.out / f)) << f;
  }
  const auto summary = nlohmann::json::parse(slurp(cfg.out / "esd_summary.json"));
  EXPECT_TRUE(summary.contains("sigma") && summary.contains("ks_bulk") && summary.contains("zero_count"));
}

TEST(Density, CsvHeaderAndRange) {
  ExperimentConfig cfg;
  cfg.ratios = std::array<double, 3>{1.0 / 3, 1.0 / 3, 1.0 - 2.0 / 3};
  cfg.points = 101;
  cfg.out = scratch("density");
  const DensityCurve d = run_density(cfg);
  EXPECT_EQ(d.grid.size(), 101u);
  const std::string text = slurp(cfg.out / "density.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "x,density");
}

TEST(SpikeCurve, ZeroBetaRowsAreInfeasible) {
  ExperimentConfig cfg;
  cfg.ratios = std::array<double, 3>{0.1, 0.2, 0.7};
  cfg.beta_grid = {0.0, 1.0, 4.0};
  cfg.trials = 0;
  cfg.out = scratch("spike_theory");
  const auto rows = run_spike_curve(cfg);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_FALSE(rows[0].theory.feasible);
  EXPECT_FALSE(rows[1].theory.feasible);
  EXPECT_TRUE(rows[2].theory.feasible);
  EXPECT_FALSE(rows[0].empirical);
  const std::string text = slurp(cfg.out / "spike_curve.csv");
  EXPECT_NE(text.find("\n0,nan,0,0,0,0\n"), std::string::npos) << text;
}

TEST(SpikeCurve, PlantedEmpiricalTracksTheoryAtModerateSize) {
  ExperimentConfig cfg;
  cfg.ratios = std::array<double, 3>{0.1, 0.2, 0.7};
  cfg.n_total = 1000;
  cfg.beta_grid = {4.0};
  cfg.trials = 2;
  cfg.out = scratch("spike_emp");
  const auto rows = run_spike_curve(cfg);
  ASSERT_TRUE(rows[0].empirical);
  const auto& e = *rows[0].empirical;
  EXPECT_EQ(e.completed, 2u);
  EXPECT_NEAR(e.sigma.mean, rows[0].theory.sigma_inf, 0.05);
  for (int l = 0; l < 3; ++l) EXPECT_NEAR(e.alignment[l].mean, rows[0].theory.q[l], 0.05);
}

TEST(DerivativeCheck, SmallShapeAgreement) {
  const DerivativeCheck dc = derivative_check(Shape3(4, 5, 6), 3.0, 0.7, 10, 1e-5, 2);
  EXPECT_EQ(dc.entries.size(), 10u);
  EXPECT_LT(dc.max_rel_error, 1e-3);
  for (const auto& e : dc.entries) {
    if (!e.mask_bit) EXPECT_EQ(e.prediction_norm, 0.0);
  }
}
