#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "punctured/tensor.hpp"

namespace punctured {

// (sigma, u, v, w) satisfying
//   T(:, v, w) = sigma u,  T(u, :, w) = sigma v,  T(u, v, :) = sigma w
// for the (masked) tensor it was solved on.
struct CriticalPoint {
  double sigma = 0.0;
  Vector u;
  Vector v;
  Vector w;

  const Vector& factor(int mode) const;
  // [u; v; w]
  Vector stacked() const;
};

enum class InitPolicy {
  Planted,     // start at the reference signal (x, y, z)
  RandomUnit,  // independent uniformly random unit vectors
  Supplied,    // caller-provided (u, v, w)
};

struct SolverConfig {
  double tol = 1e-12;  // max-norm stationarity residual
  int max_iter = 10000;
  InitPolicy init = InitPolicy::RandomUnit;

  // Planted init reads it; when present the result is also sign-fixed so that
  // <x, u> >= 0 and <y, v> >= 0.
  std::optional<SignalTriple> reference;

  // Used by InitPolicy::Supplied. Normalized before use.
  std::optional<std::array<Vector, 3>> supplied;

  // Distinguishes random restarts drawn from the same RngSeed.
  std::uint64_t init_salt = 0;

  // Record |T(u, v, w)| after every factor update.
  bool track_objective = false;
};

struct SolveOutcome {
  CriticalPoint point;
  int iterations = 0;   // full u, v, w sweeps performed
  double residual = 0;  // stationarity residual of `point`
  std::vector<double> objective;
};

// Cyclic higher-order power iteration (rank-one ALS). Each sweep sets
// u <- T(:, v, w) / |.|, then v <- T(u, :, w) / |.|, then w <- T(u, v, :) / |.|
// and stops once all three stationarity residuals are below cfg.tol.
//
// Throws ConvergenceError after cfg.max_iter sweeps and DegeneratePointError
// when a contraction vanishes.
SolveOutcome solve_traced(const Tensor3& tm, const SolverConfig& cfg, const RngSeed& rng);

// Runs `starts` random starts (the RandomUnit draws for salts 0..starts-1)
// side by side, sharing each pass over the tensor, until the start with the
// largest T(u, v, w) moves by less than 1e-7 in one sweep or `screen_sweeps`
// sweeps have run. That start is then continued to cfg.tol.
SolveOutcome solve_multistart(const Tensor3& tm, const SolverConfig& cfg, int starts, int screen_sweeps,
                              const RngSeed& rng);

CriticalPoint solve_critical_point(const Tensor3& tm, const SolverConfig& cfg, const RngSeed& rng);

// One further u, v, w sweep starting from cp.
CriticalPoint power_sweep(const Tensor3& tm, const CriticalPoint& cp);

// max_l || contraction on the other two factors - sigma * factor_l ||_inf
double stationarity_residual(const Tensor3& tm, const CriticalPoint& cp);

// (|<x,u>|, |<y,v>|, |<z,w>|)
std::array<double, 3> alignments(const CriticalPoint& cp, const SignalTriple& signal);

// |(T o B)(u, v, w) - eps * T(u, v, w)|: how far the mask is from acting like
// the constant eps on the solution's contraction.
double heuristic_gap(const Tensor3& t, const MaskTensor& m, const CriticalPoint& cp);

}  // namespace punctured
