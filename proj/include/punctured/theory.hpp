#pragma once

#include <array>
#include <complex>
#include <optional>
#include <vector>

#include "punctured/tensor.hpp"

namespace punctured {

using Complex = std::complex<double>;

// Limiting regime: mode ratios c_l (positive, summing to 1), keep probability
// epsilon in (0, 1] and, for spike queries, the signal strength beta.
struct ModelParams {
  std::array<double, 3> c{1.0 / 3, 1.0 / 3, 1.0 / 3};
  double epsilon = 1.0;
  std::optional<double> beta;
  int d = 3;

  static ModelParams cubic(double epsilon, std::optional<double> beta = std::nullopt);
  static ModelParams from_shape(const Shape3& shape, double epsilon,
                                std::optional<double> beta = std::nullopt);

  // Throws RangeError on c_l <= 0, |sum c - 1| > 1e-12, epsilon outside
  // (0, 1], d != 3 or a non-positive beta.
  void validate() const;
};

// m_1, m_2, m_3 at z with
//   eps m_l (mbar - m_l) + z m_l + c_l = 0,   mbar = m_1 + m_2 + m_3.
struct StieltjesSolution {
  Complex z;
  std::array<Complex, 3> m;
  Complex mbar;
  double residual = 0.0;  // max_l of the left-hand side above
  int iterations = 0;
};

double stieltjes_residual(Complex z, const std::array<Complex, 3>& m, const ModelParams& p);

// Damped fixed point m_l <- (1 - g) m_l + g * (-c_l / (z + eps (mbar - m_l)))
// with g = 0.5, starting at -c_l / z (or `warm`), stopping when the update
// falls below 1e-13. A Newton polish takes over when the iteration stalls.
// Real z is accepted outside the support and handled on the real branch.
StieltjesSolution solve_stieltjes(Complex z, const ModelParams& p,
                                  const std::array<Complex, 3>* warm = nullptr);

// Branch of the real-axis solution that vanishes at +infinity; requires x
// strictly right of the support. All m_l are real and negative there.
// Throws BranchError when no stable real solution exists (x inside support).
StieltjesSolution real_branch_stieltjes(double x, const ModelParams& p);

// Right edge of the limiting support. On the real branch t = x + eps mbar
// parametrizes everything explicitly:
//   m_l = (t - sqrt(t^2 + 4 eps c_l)) / (2 eps),  x = t - eps sum_l m_l,
// and the edge is where dx/dt = 0, i.e. sum_l t / sqrt(t^2 + 4 eps c_l) = 1.
double support_edge(const ModelParams& p);

struct RealBranchPoint {
  double t = 0.0;
  double x = 0.0;
  std::array<double, 3> m{};
};

// Real-branch point at parameter t (t >= edge parameter).
RealBranchPoint real_branch_at(double t, const ModelParams& p);
// Parameter t of the support edge.
double edge_parameter(const ModelParams& p);

// Mass of the atom at 0 of the limiting distribution: max(0, 2 max_l c_l - 1).
double zero_atom_mass(const ModelParams& p);

struct DensityCurve {
  std::vector<double> grid;
  std::vector<double> density;  // Im mbar(x + i eta) / pi
  double eta = 0.0;
  double zero_atom = 0.0;

  // Trapezoid integral of `density` over the grid.
  double mass() const;
};

DensityCurve limiting_density(const ModelParams& p, double x_min, double x_max, int n_points,
                              double eta = 1e-6);

struct SpikePrediction {
  bool feasible = false;
  double sigma_inf = 0.0;
  std::array<double, 3> q{0.0, 0.0, 0.0};
  std::array<double, 3> m_at_sigma{0.0, 0.0, 0.0};
  double residual = 0.0;  // |sigma + eps mbar - eps beta q1 q2 q3|
  int root_count = 0;     // sign changes seen by the grid scan
};

// Largest sigma right of the support edge with
//   sigma + eps mbar(sigma) - eps beta q1 q2 q3 = 0,
//   q_l^2 = 1 - eps m_l(sigma)^2 / c_l.
// Infeasibility (no root) is returned as feasible = false.
SpikePrediction solve_spike(const ModelParams& p);

// Smallest beta with a feasible spike, by bisection on [1e-3, 1e3].
double beta_threshold(const ModelParams& p);

// sqrt((d - 1) / (eps d)) ((d - 1) / (d - 2))^((d - 2) / 2), equal mode ratios.
double beta_threshold_cubic(double epsilon, int d);

// Limit of q_l as beta decreases to the threshold, equal mode ratios:
// sqrt((d - 2) / (d - 1)).
double threshold_alignment_cubic(int d);

// Smallest epsilon in (0, 1] with a feasible spike; nullopt if even epsilon = 1
// is below threshold.
std::optional<double> epsilon_threshold(double beta, const std::array<double, 3>& c);

// Equivalent unpunctured parameters: epsilon' = 1, beta' = sqrt(eps) beta.
ModelParams universality_map(const ModelParams& p);

// Semicircle law of the given radius: density and CDF.
double semicircle_density(double x, double radius);
double semicircle_cdf(double x, double radius);

}  // namespace punctured
