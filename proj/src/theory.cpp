#include "punctured/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "punctured/errors.hpp"

namespace punctured {

namespace {

constexpr double kDamping = 0.5;
constexpr double kUpdateTol = 1e-13;
constexpr double kResidualTol = 1e-12;
constexpr int kMaxIter = 100000;
constexpr int kNewtonEvery = 500;
constexpr int kSpikeGrid = 4000;

template <typename T>
std::array<T, 3> others_sum(const std::array<T, 3>& m) {
  return {m[1] + m[2], m[0] + m[2], m[0] + m[1]};
}

template <typename T>
double residual_of(T z, const std::array<T, 3>& m, const ModelParams& p) {
  const auto s = others_sum(m);
  double r = 0.0;
  for (int l = 0; l < 3; ++l) {
    r = std::max(r, std::abs(p.epsilon * m[l] * s[l] + z * m[l] + p.c[l]));
  }
  return r;
}

// Newton on f_l(m) = m_l (z + eps S_l) + c_l, S_l = sum of the other two.
template <typename T>
bool newton_polish(T z, const ModelParams& p, std::array<T, 3>& m) {
  using Mat3 = Eigen::Matrix<T, 3, 3>;
  using Vec3 = Eigen::Matrix<T, 3, 1>;
  std::array<T, 3> x = m;
  double best = residual_of(z, x, p);
  for (int it = 0; it < 60 && best > 1e-15; ++it) {
    const auto s = others_sum(x);
    Mat3 jac;
    Vec3 f;
    for (int l = 0; l < 3; ++l) {
      f[l] = x[l] * (z + p.epsilon * s[l]) + p.c[l];
      for (int k = 0; k < 3; ++k) jac(l, k) = (l == k) ? z + p.epsilon * s[l] : p.epsilon * x[l];
    }
    const Vec3 step = jac.fullPivLu().solve(-f);
    std::array<T, 3> next = x;
    bool finite = true;
    for (int l = 0; l < 3; ++l) {
      next[l] += step[l];
      finite = finite && std::isfinite(std::abs(next[l]));
    }
    if (!finite) return false;
    const double r = residual_of(z, next, p);
    x = next;
    if (r >= best && r <= kResidualTol) break;
    best = std::min(best, r);
  }
  if (residual_of(z, x, p) > kResidualTol) return false;
  m = x;
  return true;
}

bool half_plane_ok(Complex z, const std::array<Complex, 3>& m) {
  const double sign = z.imag() > 0 ? 1.0 : -1.0;
  return std::all_of(m.begin(), m.end(), [&](const Complex& v) { return sign * v.imag() > 0.0; });
}

// Spectral radius of the undamped fixed-point map's Jacobian on the real
// axis, J = diag(a) (1 1^T - I) with a_l = eps m_l^2 / c_l. Below 1 exactly
// on the stable (physical) branch outside the support.
double real_jacobian_radius(const std::array<double, 3>& m, const ModelParams& p) {
  Eigen::Vector3d sa;
  for (int l = 0; l < 3; ++l) sa[l] = std::sqrt(p.epsilon * m[l] * m[l] / p.c[l]);
  Eigen::Matrix3d sym = (Eigen::Matrix3d::Ones() - Eigen::Matrix3d::Identity());
  sym = sa.asDiagonal() * sym * sa.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Stable form of (t - sqrt(t^2 + 4 eps c)) / (2 eps).
double branch_m(double t, double eps, double c) {
  return -2.0 * c / (t + std::sqrt(t * t + 4.0 * eps * c));
}

double spike_function(double t, const ModelParams& p) {
  const RealBranchPoint r = real_branch_at(t, p);
  double prod = 1.0;
  for (int l = 0; l < 3; ++l) {
    prod *= std::sqrt(std::max(0.0, 1.0 - p.epsilon * r.m[l] * r.m[l] / p.c[l]));
  }
  // x + eps mbar equals t on the real branch.
  return t - p.epsilon * (*p.beta) * prod;
}

struct SpikeScan {
  std::vector<double> t;
  std::vector<double> f;
  double t_min = 0.0;
  double f_min = 0.0;
};

SpikeScan scan_spike(const ModelParams& p) {
  const double te = edge_parameter(p);
  double t_hi = std::max(p.epsilon * (*p.beta) + 3.0, te + 1.0);
  while (spike_function(t_hi, p) <= 0.0) t_hi *= 2.0;

  SpikeScan s;
  s.t.resize(kSpikeGrid + 1);
  s.f.resize(kSpikeGrid + 1);
  std::size_t best = 0;
  for (int k = 0; k <= kSpikeGrid; ++k) {
    // quadratic spacing, dense near the edge where the root sits near threshold
    const double frac = static_cast<double>(k) / kSpikeGrid;
    const double t = k == kSpikeGrid ? t_hi : te + (t_hi - te) * frac * frac;
    s.t[k] = t;
    s.f[k] = spike_function(t, p);
    if (s.f[k] < s.f[best]) best = static_cast<std::size_t>(k);
  }
  // golden-section refinement of the minimum between the neighbours of `best`
  double a = s.t[best == 0 ? 0 : best - 1];
  double b = s.t[std::min<std::size_t>(best + 1, kSpikeGrid)];
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c1 = b - g * (b - a), c2 = a + g * (b - a);
  double f1 = spike_function(c1, p), f2 = spike_function(c2, p);
  for (int it = 0; it < 100 && b - a > 1e-15 * std::max(1.0, b); ++it) {
    if (f1 < f2) {
      b = c2;
      c2 = c1;
      f2 = f1;
      c1 = b - g * (b - a);
      f1 = spike_function(c1, p);
    } else {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + g * (b - a);
      f2 = spike_function(c2, p);
    }
  }
  s.t_min = s.t[best];
  s.f_min = s.f[best];
  const double tm = 0.5 * (a + b);
  const double fm = spike_function(tm, p);
  if (fm < s.f_min) {
    s.t_min = tm;
    s.f_min = fm;
  }
  return s;
}

bool spike_feasible(const ModelParams& p) {
  if (edge_parameter(p) >= p.epsilon * (*p.beta)) return false;
  return scan_spike(p).f_min < 0.0;
}

}  // namespace

ModelParams ModelParams::cubic(double epsilon, std::optional<double> beta) {
  ModelParams p;
  p.c = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  p.epsilon = epsilon;
  p.beta = beta;
  return p;
}

ModelParams ModelParams::from_shape(const Shape3& shape, double epsilon, std::optional<double> beta) {
  ModelParams p;
  p.c = {shape.ratio(1), shape.ratio(2), shape.ratio(3)};
  p.epsilon = epsilon;
  p.beta = beta;
  return p;
}

void ModelParams::validate() const {
  for (double cl : c) {
    if (!(cl > 0.0)) throw RangeError("mode ratios must be positive");
  }
  if (std::abs(c[0] + c[1] + c[2] - 1.0) > 1e-12) throw RangeError("mode ratios must sum to 1");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw RangeError("epsilon must lie in (0, 1]");
  if (d != 3) throw RangeError("fixed-point solvers are implemented for order-3 tensors only");
  if (beta && !(*beta > 0.0)) throw RangeError("beta must be positive");
}

double stieltjes_residual(Complex z, const std::array<Complex, 3>& m, const ModelParams& p) {
  return residual_of(z, m, p);
}

StieltjesSolution solve_stieltjes(Complex z, const ModelParams& p, const std::array<Complex, 3>* warm) {
  p.validate();
  if (z.imag() == 0.0) {
    const double x = z.real();
    if (x == 0.0) throw BranchError("z = 0 lies inside the support");
    const StieltjesSolution r = real_branch_stieltjes(std::abs(x), p);
    if (x > 0.0) return r;
    // the limiting law is symmetric: m_l(-x) = -m_l(x)
    StieltjesSolution out = r;
    out.z = z;
    for (auto& v : out.m) v = -v;
    out.mbar = -r.mbar;
    out.residual = residual_of(z, out.m, p);
    return out;
  }

  std::array<Complex, 3> m;
  if (warm) {
    m = *warm;
  } else {
    for (int l = 0; l < 3; ++l) m[l] = -p.c[l] / z;
  }

  StieltjesSolution out;
  out.z = z;
  bool done = false;
  int it = 0;
  for (; it < kMaxIter && !done; ++it) {
    const auto s = others_sum(m);
    double delta = 0.0;
    for (int l = 0; l < 3; ++l) {
      const Complex den = z + p.epsilon * s[l];
      if (std::abs(den) < 1e-300) throw BranchError("vanishing denominator in Stieltjes iteration");
      const Complex next = (1.0 - kDamping) * m[l] + kDamping * (-p.c[l] / den);
      delta = std::max(delta, std::abs(next - m[l]));
      m[l] = next;
    }
    if (delta < kUpdateTol) {
      done = residual_of(z, m, p) <= kResidualTol || newton_polish(z, p, m);
    } else if ((it + 1) % kNewtonEvery == 0) {
      auto trial = m;
      if (newton_polish(z, p, trial) && half_plane_ok(z, trial)) {
        m = trial;
        done = true;
      }
    }
  }
  if (!done && !newton_polish(z, p, m)) {
    throw ConvergenceError("Stieltjes fixed point did not converge at z = (" +
                               std::to_string(z.real()) + ", " + std::to_string(z.imag()) + ")",
                           residual_of(z, m, p));
  }
  if (!half_plane_ok(z, m)) {
    throw BranchError("Stieltjes solution left the half-plane it must map into");
  }
  out.m = m;
  out.mbar = m[0] + m[1] + m[2];
  out.residual = residual_of(z, m, p);
  out.iterations = it;
  return out;
}

StieltjesSolution real_branch_stieltjes(double x, const ModelParams& p) {
  p.validate();
  if (!(x > 0.0)) throw BranchError("real branch requires x right of the support");
  std::array<double, 3> m;
  for (int l = 0; l < 3; ++l) m[l] = -p.c[l] / x;

  auto acceptable = [&](const std::array<double, 3>& v) {
    return std::all_of(v.begin(), v.end(), [](double e) { return e < 0.0; }) &&
           residual_of(x, v, p) <= kResidualTol && real_jacobian_radius(v, p) < 1.0;
  };

  bool done = false;
  int it = 0;
  for (; it < kMaxIter && !done; ++it) {
    const auto s = others_sum(m);
    double delta = 0.0;
    for (int l = 0; l < 3; ++l) {
      const double den = x + p.epsilon * s[l];
      if (!(den > 0.0)) {
        throw BranchError("real Stieltjes iteration left the branch at x = " + std::to_string(x));
      }
      const double next = (1.0 - kDamping) * m[l] + kDamping * (-p.c[l] / den);
      delta = std::max(delta, std::abs(next - m[l]));
      m[l] = next;
    }
    if (delta < kUpdateTol || (it + 1) % kNewtonEvery == 0) {
      auto trial = m;
      if ((residual_of(x, trial, p) <= kResidualTol || newton_polish(x, p, trial)) && acceptable(trial)) {
        m = trial;
        done = true;
      }
    }
  }
  if (!done) {
    throw BranchError("no stable real solution at x = " + std::to_string(x) +
                      " (inside the support?)");
  }
  StieltjesSolution out;
  out.z = Complex(x, 0.0);
  for (int l = 0; l < 3; ++l) out.m[l] = Complex(m[l], 0.0);
  out.mbar = Complex(m[0] + m[1] + m[2], 0.0);
  out.residual = residual_of(x, m, p);
  out.iterations = it;
  return out;
}

double edge_parameter(const ModelParams& p) {
  p.validate();
  auto g = [&](double t) {
    double s = 0.0;
    for (double cl : p.c) s += t / std::sqrt(t * t + 4.0 * p.epsilon * cl);
    return s - 1.0;
  };
  double lo = 0.0, hi = 1.0;
  while (g(hi) <= 0.0) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? hi : lo) = mid;
  }
  return hi;
}

RealBranchPoint real_branch_at(double t, const ModelParams& p) {
  RealBranchPoint r;
  r.t = t;
  double mbar = 0.0;
  for (int l = 0; l < 3; ++l) {
    r.m[l] = branch_m(t, p.epsilon, p.c[l]);
    mbar += r.m[l];
  }
  r.x = t - p.epsilon * mbar;
  return r;
}

double support_edge(const ModelParams& p) {
  return real_branch_at(edge_parameter(p), p).x;
}

double zero_atom_mass(const ModelParams& p) {
  const double cmax = *std::max_element(p.c.begin(), p.c.end());
  return std::max(0.0, 2.0 * cmax - 1.0);
}

double DensityCurve::mass() const {
  double s = 0.0;
  for (std::size_t n = 1; n < grid.size(); ++n) {
    s += 0.5 * (density[n] + density[n - 1]) * (grid[n] - grid[n - 1]);
  }
  return s;
}

DensityCurve limiting_density(const ModelParams& p, double x_min, double x_max, int n_points, double eta) {
  p.validate();
  if (!(x_min < x_max)) throw RangeError("density grid needs x_min < x_max");
  if (n_points < 2) throw RangeError("density grid needs at least two points");
  if (!(eta > 0.0)) throw RangeError("eta must be positive");

  DensityCurve curve;
  curve.eta = eta;
  curve.zero_atom = zero_atom_mass(p);
  curve.grid.resize(static_cast<std::size_t>(n_points));
  curve.density.resize(static_cast<std::size_t>(n_points));
  std::optional<std::array<Complex, 3>> warm;
  for (int n = 0; n < n_points; ++n) {
    const double x = x_min + (x_max - x_min) * n / (n_points - 1);
    StieltjesSolution s;
    try {
      s = solve_stieltjes(Complex(x, eta), p, warm ? &*warm : nullptr);
    } catch (const NumericalError& e) {
      // cold restart before giving up on this abscissa
      try {
        s = solve_stieltjes(Complex(x, eta), p, nullptr);
      } catch (const NumericalError&) {
        throw NumericalError("limiting density failed at x = " + std::to_string(x) + ": " + e.what());
      }
    }
    warm = s.m;
    curve.grid[static_cast<std::size_t>(n)] = x;
    curve.density[static_cast<std::size_t>(n)] = s.mbar.imag() / std::numbers::pi;
  }
  return curve;
}

SpikePrediction solve_spike(const ModelParams& p) {
  p.validate();
  if (!p.beta) throw RangeError("solve_spike needs beta");
  SpikePrediction out;
  const double te = edge_parameter(p);
  if (te >= p.epsilon * (*p.beta)) return out;  // F(t) >= t - eps beta > 0

  const SpikeScan scan = scan_spike(p);
  std::size_t last = scan.t.size();
  for (std::size_t k = 0; k + 1 < scan.t.size(); ++k) {
    if (scan.f[k] < 0.0 && scan.f[k + 1] >= 0.0) {
      ++out.root_count;
      last = k;
    }
  }
  double lo = 0.0, hi = 0.0;
  if (last < scan.t.size()) {
    lo = scan.t[last];
    hi = scan.t[last + 1];
  } else if (scan.f_min < 0.0) {
    // negative dip narrower than the grid spacing
    out.root_count = 1;
    lo = scan.t_min;
    hi = *std::upper_bound(scan.t.begin(), scan.t.end(), scan.t_min);
  } else {
    return out;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (spike_function(mid, p) < 0.0 ? lo : hi) = mid;
  }
  const RealBranchPoint r = real_branch_at(0.5 * (lo + hi), p);
  out.feasible = true;
  out.sigma_inf = r.x;
  out.m_at_sigma = r.m;
  double prod = 1.0, mbar = 0.0;
  for (int l = 0; l < 3; ++l) {
    out.q[l] = std::sqrt(std::max(0.0, 1.0 - p.epsilon * r.m[l] * r.m[l] / p.c[l]));
    prod *= out.q[l];
    mbar += r.m[l];
  }
  out.residual = std::abs(r.x + p.epsilon * mbar - p.epsilon * (*p.beta) * prod);
  return out;
}

double beta_threshold(const ModelParams& p) {
  p.validate();
  ModelParams q = p;
  auto feasible = [&](double beta) {
    q.beta = beta;
    return spike_feasible(q);
  };
  double lo = 1e-3, hi = 1e3;
  if (feasible(lo) || !feasible(hi)) {
    throw NumericalError("beta threshold is not bracketed by [1e-3, 1e3]");
  }
  while (hi - lo > 1e-11) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? hi : lo) = mid;
  }
  return hi;
}

double beta_threshold_cubic(double epsilon, int d) {
  if (d < 3) throw RangeError("tensor order d must be at least 3");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw RangeError("epsilon must lie in (0, 1]");
  const double dd = d;
  return std::sqrt((dd - 1.0) / (epsilon * dd)) * std::pow((dd - 1.0) / (dd - 2.0), (dd - 2.0) / 2.0);
}

double threshold_alignment_cubic(int d) {
  if (d < 3) throw RangeError("tensor order d must be at least 3");
  return std::sqrt((d - 2.0) / (d - 1.0));
}

std::optional<double> epsilon_threshold(double beta, const std::array<double, 3>& c) {
  if (!(beta > 0.0)) throw RangeError("beta must be positive");
  ModelParams p;
  p.c = c;
  p.beta = beta;
  auto feasible = [&](double eps) {
    p.epsilon = eps;
    return spike_feasible(p);
  };
  if (!feasible(1.0)) return std::nullopt;
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? hi : lo) = mid;
  }
  return hi;
}

ModelParams universality_map(const ModelParams& p) {
  p.validate();
  ModelParams out = p;
  out.epsilon = 1.0;
  if (p.beta) out.beta = std::sqrt(p.epsilon) * (*p.beta);
  return out;
}

double semicircle_density(double x, double radius) {
  if (std::abs(x) >= radius) return 0.0;
  return 2.0 * std::sqrt(radius * radius - x * x) / (std::numbers::pi * radius * radius);
}

double semicircle_cdf(double x, double radius) {
  if (x <= -radius) return 0.0;
  if (x >= radius) return 1.0;
  const double r2 = radius * radius;
  return 0.5 + x * std::sqrt(r2 - x * x) / (std::numbers::pi * r2) + std::asin(x / radius) / std::numbers::pi;
}

}  // namespace punctured
