#include "punctured/phi.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include <Eigen/Eigenvalues>

#include "punctured/errors.hpp"

namespace punctured {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix assemble(const Shape3& s, const Matrix& p12, const Matrix& p13, const Matrix& p23) {
  const auto n1 = static_cast<Eigen::Index>(s.n1());
  const auto n2 = static_cast<Eigen::Index>(s.n2());
  const auto n3 = static_cast<Eigen::Index>(s.n3());
  Matrix phi = Matrix::Zero(n1 + n2 + n3, n1 + n2 + n3);
  phi.block(0, n1, n1, n2) = p12;
  phi.block(0, n1 + n2, n1, n3) = p13;
  phi.block(n1, n1 + n2, n2, n3) = p23;
  phi.block(n1, 0, n2, n1) = p12.transpose();
  phi.block(n1 + n2, 0, n3, n1) = p13.transpose();
  phi.block(n1 + n2, n1, n3, n2) = p23.transpose();
  return phi;
}

void check_dims(const Shape3& s, const Vector& u, const Vector& v, const Vector& w) {
  if (static_cast<std::size_t>(u.size()) != s.n1() || static_cast<std::size_t>(v.size()) != s.n2() ||
      static_cast<std::size_t>(w.size()) != s.n3()) {
    throw DimensionError("build_phi: factor lengths do not match the tensor shape");
  }
}

}  // namespace

PhiMatrix::PhiMatrix(Shape3 shape, Matrix entries) : shape_(shape), entries_(std::move(entries)) {
  const auto n = static_cast<Eigen::Index>(shape_.total());
  if (entries_.rows() != n || entries_.cols() != n) {
    throw DimensionError("Phi must be N x N with N = n1 + n2 + n3");
  }
}

Eigen::Index PhiMatrix::offset(int mode) const {
  switch (mode) {
    case 1: return 0;
    case 2: return static_cast<Eigen::Index>(shape_.n1());
    case 3: return static_cast<Eigen::Index>(shape_.n1() + shape_.n2());
    default: throw RangeError("invalid mode");
  }
}

PhiMatrix build_phi(const Tensor3& tm, const Vector& u, const Vector& v, const Vector& w) {
  const Shape3& s = tm.shape();
  check_dims(s, u, v, w);
  return PhiMatrix(s, assemble(s, contract_one(tm, 3, w), contract_one(tm, 2, v), contract_one(tm, 1, u)));
}

PhiMatrix build_phi(const Tensor3& tm, const CriticalPoint& cp) {
  return build_phi(tm, cp.u, cp.v, cp.w);
}

PhiMatrix build_noise_phi_streaming(const Shape3& s, double epsilon, const RngSeed& rng,
                                    const Vector& a, const Vector& b, const Vector& c) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw RangeError("epsilon must lie in [0, 1]");
  check_dims(s, a, b, c);
  const auto n1 = static_cast<Eigen::Index>(s.n1());
  const auto n2 = static_cast<Eigen::Index>(s.n2());
  const auto n3 = static_cast<Eigen::Index>(s.n3());
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.total()));

  // Same draw order as sample_noise / sample_mask, so the result matches the
  // stored-tensor route for equal seeds.
  auto noise_gen = rng.engine(RngPurpose::Noise);
  auto mask_gen = rng.engine(RngPurpose::Mask);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Matrix p12(n1, n2);
  RowMatrix p13 = RowMatrix::Zero(n1, n3);
  RowMatrix p23 = RowMatrix::Zero(n2, n3);
  Vector row(n3);
  for (Eigen::Index i = 0; i < n1; ++i) {
    for (Eigen::Index j = 0; j < n2; ++j) {
      for (Eigen::Index k = 0; k < n3; ++k) {
        const double g = normal(noise_gen);
        row[k] = uniform(mask_gen) < epsilon ? scale * g : 0.0;
      }
      p12(i, j) = row.dot(c);
      p13.row(i) += b[j] * row.transpose();
      p23.row(j) += a[i] * row.transpose();
    }
  }
  return PhiMatrix(s, assemble(s, p12, p13, p23));
}

SpectrumResult eigen_spectrum(const Matrix& symmetric, bool want_vectors, double zero_tol_rel) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(
      symmetric, want_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("symmetric eigensolver did not converge");
  }
  SpectrumResult out;
  out.eigenvalues = solver.eigenvalues().reverse();
  if (want_vectors) out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  const double scale = out.eigenvalues.size() ? out.eigenvalues.cwiseAbs().maxCoeff() : 0.0;
  out.zero_tol = zero_tol_rel * scale;
  out.zero_count = static_cast<std::size_t>(
      (out.eigenvalues.array().abs() < out.zero_tol).count());
  if (scale == 0.0) out.zero_count = static_cast<std::size_t>(out.eigenvalues.size());
  return out;
}

SpectrumResult eigen_spectrum(const PhiMatrix& phi, bool want_vectors, double zero_tol_rel) {
  return eigen_spectrum(phi.matrix(), want_vectors, zero_tol_rel);
}

StructuralReport check_structural_eigenpairs(const PhiMatrix& phi, const CriticalPoint& cp, double tol) {
  return check_structural_eigenpairs(phi, cp, eigen_spectrum(phi, false), tol);
}

StructuralReport check_structural_eigenpairs(const PhiMatrix& phi, const CriticalPoint& cp,
                                             const SpectrumResult& spectrum, double tol) {
  const Shape3& s = phi.shape();
  check_dims(s, cp.u, cp.v, cp.w);
  const Matrix& m = phi.matrix();
  const double sigma = cp.sigma;
  const auto n1 = static_cast<Eigen::Index>(s.n1());
  const auto n2 = static_cast<Eigen::Index>(s.n2());
  const auto n3 = static_cast<Eigen::Index>(s.n3());

  StructuralReport r;
  r.tol = tol;

  const Vector top = cp.stacked();
  r.top_residual = (m * top - 2.0 * sigma * top).norm();

  Vector uv = Vector::Zero(n1 + n2 + n3);
  uv.head(n1) = cp.u;
  uv.segment(n1, n2) = -cp.v;
  Vector uw = Vector::Zero(n1 + n2 + n3);
  uw.head(n1) = cp.u;
  uw.tail(n3) = -cp.w;
  r.minus_residual = std::max((m * uv + sigma * uv).norm(), (m * uw + sigma * uw).norm());

  const Vector& lam = spectrum.eigenvalues;
  Eigen::Index spike = 0;
  (lam.array() - 2.0 * sigma).abs().minCoeff(&spike);
  r.upper_excess = -std::numeric_limits<double>::infinity();
  r.lower_excess = -std::numeric_limits<double>::infinity();
  for (Eigen::Index n = 0; n < lam.size(); ++n) {
    if (n == spike) continue;
    r.upper_excess = std::max(r.upper_excess, lam[n] - sigma);
    r.lower_excess = std::max(r.lower_excess, -lam[n] - sigma);
  }

  if (r.top_residual > tol) {
    r.failure = "2*sigma eigenpair";
  } else if (r.minus_residual > tol) {
    r.failure = "-sigma eigenspace";
  } else if (r.upper_excess > tol) {
    r.failure = "|lambda| <= sigma (upper)";
  } else if (r.lower_excess > tol) {
    r.failure = "|lambda| <= sigma (lower)";
  }
  r.pass = r.failure.empty();
  return r;
}

Matrix spike_component(const Shape3& s, const SignalTriple& signal, const CriticalPoint& cp,
                       double epsilon) {
  check_dims(s, signal.x, signal.y, signal.z);
  check_dims(s, cp.u, cp.v, cp.w);
  const double zw = signal.z.dot(cp.w);
  const double yv = signal.y.dot(cp.v);
  const double xu = signal.x.dot(cp.u);
  const double scale = epsilon * signal.beta;
  return assemble(s, scale * zw * signal.x * signal.y.transpose(),
                  scale * yv * signal.x * signal.z.transpose(),
                  scale * xu * signal.y * signal.z.transpose());
}

double spike_decomposition_residual(const PhiMatrix& phi, const SignalTriple& signal,
                                    const CriticalPoint& cp, const PhiMatrix& phi0, double epsilon) {
  if (!(phi.shape() == phi0.shape())) {
    throw DimensionError("spike decomposition: Phi and Phi0 shapes differ");
  }
  const Matrix e = phi.matrix() - phi0.matrix() - spike_component(phi.shape(), signal, cp, epsilon);

  std::mt19937_64 gen(0x5EED);
  std::normal_distribution<double> normal;
  Vector x(e.rows());
  for (auto& v : x) v = normal(gen);
  x.normalize();
  double estimate = 0.0;
  for (int it = 0; it < 50; ++it) {
    const Vector y = e.transpose() * (e * x);
    const double n = y.norm();
    if (n == 0.0) return 0.0;
    x = y / n;
    estimate = (e * x).norm();
  }
  return estimate;
}

Resolvent::Resolvent(const PhiMatrix& phi, double sigma, double min_gap) : sigma_(sigma) {
  const Vector lam = eigen_spectrum(phi, false).eigenvalues;
  gap_ = (lam.array() - sigma).abs().minCoeff();
  if (!(gap_ > min_gap)) {
    throw SingularResolventError("sigma is within " + std::to_string(gap_) +
                                     " of an eigenvalue; the resolvent is singular",
                                 gap_);
  }
  lu_.compute(phi.matrix() - sigma * Matrix::Identity(phi.size(), phi.size()));
}

Vector Resolvent::solve(const Vector& rhs) const {
  if (rhs.size() != lu_.rows()) throw DimensionError("resolvent: right-hand side has wrong length");
  return lu_.solve(rhs);
}

Vector resolvent_solve(const PhiMatrix& phi, double sigma, const Vector& rhs) {
  return Resolvent(phi, sigma).solve(rhs);
}

Vector predict_factor_derivative(const Resolvent& q, const CriticalPoint& cp, std::size_t i,
                                 std::size_t j, std::size_t k, int mask_bit, std::size_t n_total) {
  const auto n1 = cp.u.size();
  const auto n2 = cp.v.size();
  const auto n3 = cp.w.size();
  if (i >= static_cast<std::size_t>(n1) || j >= static_cast<std::size_t>(n2) ||
      k >= static_cast<std::size_t>(n3)) {
    throw DimensionError("predict_factor_derivative: entry index out of range");
  }
  if (mask_bit != 0 && mask_bit != 1) throw RangeError("mask bit must be 0 or 1");
  if (mask_bit == 0) return Vector::Zero(n1 + n2 + n3);

  const auto ii = static_cast<Eigen::Index>(i);
  const auto jj = static_cast<Eigen::Index>(j);
  const auto kk = static_cast<Eigen::Index>(k);
  const double ui = cp.u[ii], vj = cp.v[jj], wk = cp.w[kk];

  Vector r(n1 + n2 + n3);
  r.head(n1) = -(vj * wk * ui) * cp.u;
  r[ii] += vj * wk;
  r.segment(n1, n2) = -(ui * wk * vj) * cp.v;
  r[n1 + jj] += ui * wk;
  r.tail(n3) = -(ui * vj * wk) * cp.w;
  r[n1 + n2 + kk] += ui * vj;

  return -(1.0 / std::sqrt(static_cast<double>(n_total))) * q.solve(r);
}

Vector predict_factor_derivative(const PhiMatrix& phi, const CriticalPoint& cp, std::size_t i,
                                 std::size_t j, std::size_t k, int mask_bit, std::size_t n_total) {
  if (mask_bit == 0) {
    return Vector::Zero(cp.u.size() + cp.v.size() + cp.w.size());
  }
  return predict_factor_derivative(Resolvent(phi, cp.sigma), cp, i, j, k, mask_bit, n_total);
}

ESDHistogram esd_histogram(const SpectrumResult& spectrum, int bins, bool exclude_zeros) {
  if (bins < 1) throw RangeError("histogram needs at least one bin");
  ESDHistogram h;
  std::vector<double> kept;
  kept.reserve(static_cast<std::size_t>(spectrum.eigenvalues.size()));
  for (double l : spectrum.eigenvalues) {
    if (exclude_zeros && std::abs(l) < spectrum.zero_tol) {
      ++h.excluded_zero_count;
    } else {
      kept.push_back(l);
    }
  }
  if (exclude_zeros && spectrum.zero_tol == 0.0) {
    // all-zero spectrum: everything is a zero eigenvalue
    h.excluded_zero_count = static_cast<std::size_t>(spectrum.eigenvalues.size());
    kept.clear();
  }
  h.included = kept.size();
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  h.density.assign(static_cast<std::size_t>(bins), 0.0);

  double lo = 0.0, hi = 1.0;
  if (!kept.empty()) {
    const auto [mn, mx] = std::minmax_element(kept.begin(), kept.end());
    lo = *mn;
    hi = *mx;
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / bins;
  h.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) h.bin_edges[static_cast<std::size_t>(b)] = lo + b * width;
  h.bin_edges.back() = hi;

  for (double l : kept) {
    auto b = static_cast<int>(std::floor((l - lo) / width));
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  if (h.included > 0) {
    for (int b = 0; b < bins; ++b) {
      const auto bb = static_cast<std::size_t>(b);
      h.density[bb] = static_cast<double>(h.counts[bb]) /
                      (static_cast<double>(h.included) * (h.bin_edges[bb + 1] - h.bin_edges[bb]));
    }
  }
  return h;
}

void write_spectrum_csv(std::ostream& out, const SpectrumResult& spectrum) {
  out << "index,eigenvalue\n" << std::setprecision(17);
  for (Eigen::Index n = 0; n < spectrum.eigenvalues.size(); ++n) {
    out << n << ',' << spectrum.eigenvalues[n] << '\n';
  }
}

void write_histogram_csv(std::ostream& out, const ESDHistogram& hist) {
  out << "bin_left,bin_right,density\n" << std::setprecision(17);
  for (std::size_t b = 0; b < hist.counts.size(); ++b) {
    out << hist.bin_edges[b] << ',' << hist.bin_edges[b + 1] << ',' << hist.density[b] << '\n';
  }
}

}  // namespace punctured
