#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "punctured/errors.hpp"
#include "punctured/experiments.hpp"

using namespace punctured;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kValidation = 2, kNumerical = 3 };

template <typename T>
std::array<T, 3> parse_triple(const std::string& text, const char* flag) {
  std::array<T, 3> out{};
  std::stringstream ss(text);
  std::string item;
  int n = 0;
  while (std::getline(ss, item, ',')) {
    if (n == 3) break;
    std::stringstream is(item);
    if (!(is >> out[n]) || !is.eof()) throw RangeError(std::string("bad value in ") + flag);
    ++n;
  }
  if (n != 3 || std::getline(ss, item)) throw RangeError(std::string(flag) + " expects three comma-separated values");
  return out;
}

// Raw flag values; only those given on the command line override the config file.
struct Flags {
  std::string config, shape, ratios, beta_grid, epsilon_grid, init, out, format;
  std::size_t n_total = 0;
  double beta = 0, epsilon = 0, tol = 0, eta = 0, fd_step = 0, x_min = 0, x_max = 0, inject = 0;
  std::uint64_t seed = 0;
  int trials = 0, restarts = 0, screen_sweeps = 0, max_iter = 0, threads = 0, bins = 0, points = 0, fd_entries = 0;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file; flags override it");
  sub->add_option("--shape", f.shape, "tensor shape n1,n2,n3");
  sub->add_option("--ratios", f.ratios, "mode ratios c1,c2,c3");
  sub->add_option("--n-total", f.n_total, "N = n1 + n2 + n3 (with --ratios)");
  sub->add_option("--beta", f.beta, "signal strength");
  sub->add_option("--epsilon", f.epsilon, "keep probability");
  sub->add_option("--trials", f.trials, "Monte Carlo trials");
  sub->add_option("--seed", f.seed, "base seed");
  sub->add_option("--init", f.init, "initialization: planted or random");
  sub->add_option("--restarts", f.restarts, "random starts per trial (largest sigma kept)");
  sub->add_option("--screen-sweeps", f.screen_sweeps, "sweeps before the best random start is picked");
  sub->add_option("--tol", f.tol, "solver tolerance");
  sub->add_option("--max-iter", f.max_iter, "solver sweep budget");
  sub->add_option("--threads", f.threads, "worker threads for trials");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--format", f.format, "output format (csv)");
}

ExperimentConfig build_config(const CLI::App* sub, const Flags& f, ExperimentConfig cfg) {
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw FormatError("cannot open config " + f.config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("config is not valid JSON: ") + e.what());
    }
    apply_json(cfg, j);
  }
  auto given = [&](const char* name) { return sub->get_option_no_throw(name) && sub->count(name) > 0; };
  if (given("--shape")) cfg.shape = parse_triple<std::size_t>(f.shape, "--shape");
  if (given("--ratios")) cfg.ratios = parse_triple<double>(f.ratios, "--ratios");
  if (given("--n-total")) cfg.n_total = f.n_total;
  if (given("--shape") && !given("--ratios")) cfg.ratios.reset();
  if (given("--ratios") && !given("--shape")) cfg.shape.reset();
  if (given("--beta")) cfg.beta = f.beta;
  if (given("--epsilon")) cfg.epsilon = f.epsilon;
  if (given("--beta-grid")) cfg.beta_grid = parse_grid(f.beta_grid);
  if (given("--epsilon-grid")) cfg.epsilon_grid = parse_grid(f.epsilon_grid);
  if (given("--trials")) cfg.trials = f.trials;
  if (given("--seed")) cfg.seed = f.seed;
  if (given("--init")) cfg.init = parse_init(f.init);
  if (given("--restarts")) cfg.restarts = f.restarts;
  if (given("--screen-sweeps")) cfg.screen_sweeps = f.screen_sweeps;
  if (given("--tol")) cfg.tol = f.tol;
  if (given("--max-iter")) cfg.max_iter = f.max_iter;
  if (given("--threads")) cfg.threads = f.threads;
  if (given("--out")) cfg.out = f.out;
  if (given("--format")) cfg.format = f.format;
  if (given("--bins")) cfg.bins = f.bins;
  if (given("--eta")) cfg.eta = f.eta;
  if (given("--points")) cfg.points = f.points;
  if (given("--x-min")) cfg.x_min = f.x_min;
  if (given("--x-max")) cfg.x_max = f.x_max;
  if (given("--fd-entries")) cfg.fd_entries = f.fd_entries;
  if (given("--fd-step")) cfg.fd_step = f.fd_step;
  if (given("--inject-sigma-perturbation")) cfg.inject_sigma_perturbation = f.inject;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral analysis of punctured rank-one spiked tensors"};
  app.require_subcommand(1);
  Flags f;

  auto* esd = app.add_subcommand("esd", "spectrum of Phi at a critical point, with theory overlay");
  add_common(esd, f);
  esd->add_option("--bins", f.bins, "histogram bins");
  esd->add_option("--eta", f.eta, "imaginary offset for the theory density");
  esd->add_option("--points", f.points, "theory density grid points");

  auto* density = app.add_subcommand("density", "limiting spectral density");
  add_common(density, f);
  density->add_option("--eta", f.eta, "imaginary offset");
  density->add_option("--points", f.points, "grid points");
  density->add_option("--x-min", f.x_min, "left end of the grid");
  density->add_option("--x-max", f.x_max, "right end of the grid");

  auto* spike = app.add_subcommand("spike-curve", "asymptotic sigma and alignments against beta");
  add_common(spike, f);
  spike->add_option("--beta-grid", f.beta_grid, "start:stop:step or comma list");

  auto* sweep = app.add_subcommand("epsilon-sweep", "alignments against epsilon, theory and Monte Carlo");
  add_common(sweep, f);
  sweep->add_option("--epsilon-grid", f.epsilon_grid, "start:stop:step or comma list");

  auto* validate = app.add_subcommand("validate", "invariant suites with a JSON report");
  add_common(validate, f);
  validate->add_option("--inject-sigma-perturbation", f.inject, "offset added to sigma (negative control)");

  auto* deriv = app.add_subcommand("derivative-check", "resolvent derivative against finite differences");
  add_common(deriv, f);
  deriv->add_option("--fd-entries", f.fd_entries, "number of random entries");
  deriv->add_option("--fd-step", f.fd_step, "central difference step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  ExperimentConfig cfg;
  try {
    ExperimentConfig base;
    if (sub == deriv) {
      base.beta = 3.0;
      base.epsilon = 0.7;
    } else if (sub == esd || sub == density) {
      base.ratios = std::array<double, 3>{0.1, 0.2, 0.7};
      base.n_total = 1000;
    } else if (sub == spike) {
      base.ratios = std::array<double, 3>{1.0 / 3, 1.0 / 3, 1.0 / 3};
    } else if (sub == sweep) {
      base.shape = std::array<std::size_t, 3>{50, 100, 350};
      base.beta = 2.5;
    }
    cfg = build_config(sub, f, base);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (sub == esd) {
      const EsdReport r = run_esd(cfg);
      std::cout << "sigma " << r.point.sigma << "  nonzero eigenvalues " << r.nonzero_count << " of "
                << r.spectrum.eigenvalues.size() << "  bulk KS " << r.ks_bulk << '\n';
    } else if (sub == density) {
      const DensityCurve c = run_density(cfg);
      std::cout << "density on " << c.grid.size() << " points, mass " << c.mass() << ", zero atom "
                << c.zero_atom << '\n';
    } else if (sub == spike) {
      const auto rows = run_spike_curve(cfg);
      std::cout << rows.size() << " beta values written to " << (cfg.out / "spike_curve.csv").string() << '\n';
    } else if (sub == sweep) {
      const EpsilonSweep s = run_epsilon_sweep(cfg);
      std::cout << s.rows.size() << " epsilon values, threshold ";
      if (s.epsilon_threshold) {
        std::cout << *s.epsilon_threshold;
      } else {
        std::cout << "none";
      }
      std::cout << '\n';
    } else if (sub == validate) {
      const ValidationReport r = run_validate(cfg);
      const std::string text = r.to_json().dump(2);
      std::filesystem::create_directories(cfg.out);
      std::ofstream(cfg.out / "validate_report.json") << text << '\n';
      std::cout << text << '\n';
      return r.pass() ? kOk : kValidation;
    } else if (sub == deriv) {
      const DerivativeCheck d = run_derivative_check(cfg);
      std::cout << d.entries.size() << " entries, max relative error " << d.max_rel_error << '\n';
      return d.max_rel_error < 1e-3 ? kOk : kValidation;
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const RangeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kOk;
}
