#pragma once

// Reference computations written independently of the library: explicit loops,
// closed forms and a Newton continuation for the Stieltjes system.

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "punctured/tensor.hpp"

namespace oracle {

using punctured::Matrix;
using punctured::Shape3;
using punctured::Tensor3;
using punctured::Vector;
using cplx = std::complex<double>;

inline double full(const Tensor3& t, const Vector& a, const Vector& b, const Vector& c) {
  const Shape3& s = t.shape();
  double acc = 0.0;
  for (std::size_t i = 0; i < s.n1(); ++i)
    for (std::size_t j = 0; j < s.n2(); ++j)
      for (std::size_t k = 0; k < s.n3(); ++k) acc += t(i, j, k) * a[i] * b[j] * c[k];
  return acc;
}

inline Vector mode(const Tensor3& t, int m, const Vector& p, const Vector& q) {
  const Shape3& s = t.shape();
  Vector out = Vector::Zero(static_cast<Eigen::Index>(s.dim(m)));
  for (std::size_t i = 0; i < s.n1(); ++i)
    for (std::size_t j = 0; j < s.n2(); ++j)
      for (std::size_t k = 0; k < s.n3(); ++k) {
        const double x = t(i, j, k);
        if (m == 1) out[i] += x * p[j] * q[k];
        if (m == 2) out[j] += x * p[i] * q[k];
        if (m == 3) out[k] += x * p[i] * q[j];
      }
  return out;
}

inline Matrix one(const Tensor3& t, int m, const Vector& p) {
  const Shape3& s = t.shape();
  const auto n1 = static_cast<Eigen::Index>(s.n1());
  const auto n2 = static_cast<Eigen::Index>(s.n2());
  const auto n3 = static_cast<Eigen::Index>(s.n3());
  Matrix out = m == 3 ? Matrix::Zero(n1, n2) : (m == 2 ? Matrix::Zero(n1, n3) : Matrix::Zero(n2, n3));
  for (Eigen::Index i = 0; i < n1; ++i)
    for (Eigen::Index j = 0; j < n2; ++j)
      for (Eigen::Index k = 0; k < n3; ++k) {
        const double x = t(i, j, k);
        if (m == 3) out(i, j) += x * p[k];
        if (m == 2) out(i, k) += x * p[j];
        if (m == 1) out(j, k) += x * p[i];
      }
  return out;
}

inline Matrix phi(const Tensor3& t, const Vector& u, const Vector& v, const Vector& w) {
  const Shape3& s = t.shape();
  const auto n1 = static_cast<Eigen::Index>(s.n1());
  const auto n2 = static_cast<Eigen::Index>(s.n2());
  const auto n = static_cast<Eigen::Index>(s.total());
  Matrix out = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n1; ++i)
    for (Eigen::Index j = 0; j < n2; ++j)
      for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(s.n3()); ++k) {
        const double x = t(i, j, k);
        out(i, n1 + j) += x * w[k];
        out(i, n1 + n2 + k) += x * v[j];
        out(n1 + j, n1 + n2 + k) += x * u[i];
      }
  Matrix sym = out + out.transpose();
  return sym;
}

inline Vector normal_vector(std::size_t n, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& e : v) e = nd(gen);
  return v;
}

inline Vector unit_vector(std::size_t n, std::mt19937_64& gen) {
  Vector v = normal_vector(n, gen);
  return v / v.norm();
}

inline Tensor3 normal_tensor(const Shape3& s, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  std::vector<double> vals(s.entries());
  for (auto& e : vals) e = nd(gen);
  return Tensor3(s, std::move(vals));
}

inline Shape3 random_shape(std::mt19937_64& gen, std::size_t lo, std::size_t hi) {
  std::uniform_int_distribution<std::size_t> d(lo, hi);
  const std::size_t a = d(gen), b = d(gen), c = d(gen);
  return Shape3(a, b, c);
}

// Semicircle law of radius r.
inline double semicircle_pdf(double x, double r) {
  if (std::abs(x) >= r) return 0.0;
  return 2.0 / (std::numbers::pi * r * r) * std::sqrt(r * r - x * x);
}

inline double semicircle_cdf(double x, double r) {
  if (x <= -r) return 0.0;
  if (x >= r) return 1.0;
  return 0.5 + x * std::sqrt(r * r - x * x) / (std::numbers::pi * r * r) + std::asin(x / r) / std::numbers::pi;
}

// Equal ratios: (2 eps / 3) mbar^2 + z mbar + 1 = 0. The root with Im > 0 for
// Im z > 0, and the one of smaller magnitude on the real axis.
inline cplx cubic_mbar(cplx z, double eps) {
  const double a = 2.0 * eps / 3.0;
  const cplx disc = std::sqrt(z * z - 4.0 * a);
  const cplx r1 = (-z + disc) / (2.0 * a);
  const cplx r2 = (-z - disc) / (2.0 * a);
  if (z.imag() != 0.0) return r1.imag() > 0.0 ? r1 : r2;
  return std::abs(r1) < std::abs(r2) ? r1 : r2;
}

inline double cubic_edge(double eps) { return 2.0 * std::sqrt(2.0 * eps / 3.0); }

inline double beta_threshold_cubic(double eps) {
  return std::sqrt(2.0 / (3.0 * eps)) * std::sqrt(2.0);
}

// Newton on F_l(m) = eps m_l (mbar - m_l) + z m_l + c_l, continued from
// z + i * 10 down to the requested imaginary part.
inline std::optional<std::array<cplx, 3>> stieltjes(cplx z, const std::array<double, 3>& c, double eps) {
  auto newton = [&](cplx zz, std::array<cplx, 3>& m) {
    for (int it = 0; it < 200; ++it) {
      Eigen::Matrix3cd jac;
      Eigen::Vector3cd f;
      const cplx mb = m[0] + m[1] + m[2];
      for (int l = 0; l < 3; ++l) {
        f[l] = eps * m[l] * (mb - m[l]) + zz * m[l] + c[l];
        for (int q = 0; q < 3; ++q) {
          jac(l, q) = q == l ? eps * (mb - m[l]) + zz : eps * m[l];
        }
      }
      const Eigen::Vector3cd step = jac.fullPivLu().solve(f);
      double scale = 0.0;
      for (int l = 0; l < 3; ++l) {
        m[l] -= step[l];
        scale = std::max(scale, std::abs(m[l]));
      }
      if (step.norm() < 1e-14 * (1.0 + scale)) return true;
    }
    return false;
  };
  const double target = z.imag();
  double eta = std::max(10.0, target);
  std::array<cplx, 3> m;
  const cplx z0(z.real(), eta);
  for (int l = 0; l < 3; ++l) m[l] = -c[l] / z0;
  while (true) {
    if (!newton(cplx(z.real(), eta), m)) return std::nullopt;
    if (eta == target) break;
    eta = std::max(target, eta * 0.8);
  }
  return m;
}

// Real axis right of the support: Newton continued from x = 1e3 downwards.
// Returns nullopt once the branch stops being stable (the edge was crossed).
inline std::optional<std::array<double, 3>> real_branch(double x, const std::array<double, 3>& c, double eps) {
  std::array<double, 3> m;
  double xx = std::max(1e3, x);
  for (int l = 0; l < 3; ++l) m[l] = -c[l] / xx;
  while (true) {
    bool converged = false;
    for (int it = 0; it < 100 && !converged; ++it) {
      Eigen::Matrix3d jac;
      Eigen::Vector3d f;
      const double mb = m[0] + m[1] + m[2];
      for (int l = 0; l < 3; ++l) {
        f[l] = eps * m[l] * (mb - m[l]) + xx * m[l] + c[l];
        for (int q = 0; q < 3; ++q) jac(l, q) = q == l ? eps * (mb - m[l]) + xx : eps * m[l];
      }
      const Eigen::Vector3d step = jac.fullPivLu().solve(f);
      for (int l = 0; l < 3; ++l) m[l] -= step[l];
      converged = step.norm() < 1e-15;
    }
    if (!converged) return std::nullopt;
    // stability: spectral radius of the fixed-point map's Jacobian below 1
    Eigen::Matrix3d fp;
    for (int l = 0; l < 3; ++l)
      for (int q = 0; q < 3; ++q) fp(l, q) = q == l ? 0.0 : eps * m[l] * m[l] / c[l];
    const double rho = fp.eigenvalues().cwiseAbs().maxCoeff();
    if (!(rho < 1.0) || m[0] >= 0.0 || m[1] >= 0.0 || m[2] >= 0.0) return std::nullopt;
    if (xx == x) return m;
    xx = std::max(x, xx - std::max(1e-3, 0.05 * (xx - x)));
    if (xx - x < 1e-9) xx = x;
  }
}

struct Spike {
  bool feasible = false;
  double sigma = 0.0;
  std::array<double, 3> q{};
};

// Largest root of sigma + eps mbar - eps beta q1 q2 q3 on the real branch,
// found by a descending scan from eps beta + 3 and bisection.
inline Spike spike(const std::array<double, 3>& c, double eps, double beta, double step = 1e-3) {
  auto eval = [&](double x, std::array<double, 3>& qs) -> std::optional<double> {
    const auto m = real_branch(x, c, eps);
    if (!m) return std::nullopt;
    double prod = 1.0;
    for (int l = 0; l < 3; ++l) {
      qs[l] = std::sqrt(std::max(0.0, 1.0 - eps * (*m)[l] * (*m)[l] / c[l]));
      prod *= qs[l];
    }
    return x + eps * ((*m)[0] + (*m)[1] + (*m)[2]) - eps * beta * prod;
  };
  Spike out;
  std::array<double, 3> qs{};
  double hi = eps * beta + 3.0;
  auto fhi = eval(hi, qs);
  if (!fhi) return out;
  for (double x = hi - step; x > 0.0; x -= step) {
    const auto fx = eval(x, qs);
    if (!fx) return out;
    if ((*fx) * (*fhi) <= 0.0) {
      double a = x, b = hi;
      for (int it = 0; it < 200 && b - a > 1e-14; ++it) {
        const double mid = 0.5 * (a + b);
        const auto fm = eval(mid, qs);
        if ((*fm) * (*fhi) <= 0.0) {
          a = mid;
        } else {
          b = mid;
        }
      }
      out.feasible = true;
      out.sigma = 0.5 * (a + b);
      eval(out.sigma, out.q);
      return out;
    }
    hi = x;
    fhi = fx;
  }
  return out;
}

struct Welford {
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double population_std() const { return n ? std::sqrt(m2 / static_cast<double>(n)) : 0.0; }
};

}  // namespace oracle
