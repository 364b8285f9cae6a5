#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "punctured/rank_one.hpp"
#include "punctured/tensor.hpp"

namespace punctured {

// Symmetric N x N block matrix
//
//   [ 0       P12     P13 ]
//   [ P12^T   0       P23 ]      P12 = T(:, :, w), P13 = T(:, v, :),
//   [ P13^T   P23^T   0   ]      P23 = T(u, :, :)
//
// built from one-mode contractions of a (masked) tensor.
class PhiMatrix {
public:
  PhiMatrix(Shape3 shape, Matrix entries);

  const Shape3& shape() const noexcept { return shape_; }
  const Matrix& matrix() const noexcept { return entries_; }
  Eigen::Index size() const noexcept { return entries_.rows(); }

  // Row offset of block `mode` (1, 2, 3).
  Eigen::Index offset(int mode) const;

private:
  Shape3 shape_;
  Matrix entries_;
};

PhiMatrix build_phi(const Tensor3& tm, const Vector& u, const Vector& v, const Vector& w);
PhiMatrix build_phi(const Tensor3& tm, const CriticalPoint& cp);

// Phi of the masked noise (G o B) / sqrt(N) at fixed unit vectors (a, b, c),
// accumulated entry by entry so the n1 n2 n3 tensor is never stored.
PhiMatrix build_noise_phi_streaming(const Shape3& shape, double epsilon, const RngSeed& rng,
                                    const Vector& a, const Vector& b, const Vector& c);

struct SpectrumResult {
  Vector eigenvalues;  // descending
  std::optional<Matrix> eigenvectors;  // column n pairs with eigenvalues[n]
  std::size_t zero_count = 0;
  double zero_tol = 0.0;  // absolute threshold used for zero_count
};

// Full symmetric eigendecomposition. Eigenvalues with |lambda| below
// zero_tol_rel * max|lambda| count as zero.
SpectrumResult eigen_spectrum(const PhiMatrix& phi, bool want_vectors, double zero_tol_rel = 1e-10);
SpectrumResult eigen_spectrum(const Matrix& symmetric, bool want_vectors, double zero_tol_rel = 1e-10);

struct StructuralReport {
  bool pass = false;
  double tol = 0.0;
  // || Phi s - 2 sigma s ||_2 for s = [u; v; w]
  double top_residual = 0.0;
  // max over [u; -v; 0] and [u; 0; -w] of || Phi s + sigma s ||_2
  double minus_residual = 0.0;
  // After removing the eigenvalue closest to 2 sigma: max lambda - sigma and
  // max -lambda - sigma (both <= tol when the bound holds).
  double upper_excess = 0.0;
  double lower_excess = 0.0;
  std::string failure;  // first violated item, empty on success
};

StructuralReport check_structural_eigenpairs(const PhiMatrix& phi, const CriticalPoint& cp, double tol);
StructuralReport check_structural_eigenpairs(const PhiMatrix& phi, const CriticalPoint& cp,
                                             const SpectrumResult& spectrum, double tol);

// Operator-norm estimate of E = Phi - eps beta V S V^T - Phi0 by 50 power
// iterations with a fixed start vector. V embeds (x, y, z) block-diagonally;
// S is the symmetric 3 x 3 core with off-diagonals (<z,w>, <y,v>, <x,u>).
double spike_decomposition_residual(const PhiMatrix& phi, const SignalTriple& signal,
                                    const CriticalPoint& cp, const PhiMatrix& phi0, double epsilon);

// eps beta V S V^T as a dense N x N matrix.
Matrix spike_component(const Shape3& shape, const SignalTriple& signal, const CriticalPoint& cp,
                       double epsilon);

// Factorized (Phi - sigma I) for repeated solves.
class Resolvent {
public:
  // Throws SingularResolventError when min |lambda - sigma| <= min_gap.
  Resolvent(const PhiMatrix& phi, double sigma, double min_gap = 1e-8);

  Vector solve(const Vector& rhs) const;
  double gap() const noexcept { return gap_; }
  double sigma() const noexcept { return sigma_; }

private:
  Eigen::PartialPivLU<Matrix> lu_;
  double sigma_;
  double gap_;
};

// Solves (Phi - sigma I) q = rhs.
Vector resolvent_solve(const PhiMatrix& phi, double sigma, const Vector& rhs);

// -(b / sqrt(N)) Q(sigma) r with
//   r = [v_j w_k (e_i - u_i u); u_i w_k (e_j - v_j v); u_i v_j (e_k - w_k w)],
// the derivative of [u; v; w] with respect to noise entry (i, j, k).
Vector predict_factor_derivative(const Resolvent& q, const CriticalPoint& cp, std::size_t i,
                                 std::size_t j, std::size_t k, int mask_bit, std::size_t n_total);
Vector predict_factor_derivative(const PhiMatrix& phi, const CriticalPoint& cp, std::size_t i,
                                 std::size_t j, std::size_t k, int mask_bit, std::size_t n_total);

struct ESDHistogram {
  std::vector<double> bin_edges;  // bins + 1 increasing edges
  std::vector<std::size_t> counts;
  std::vector<double> density;  // counts / (included * width)
  std::size_t included = 0;
  std::size_t excluded_zero_count = 0;
};

ESDHistogram esd_histogram(const SpectrumResult& spectrum, int bins, bool exclude_zeros);

// CSV `index,eigenvalue`
void write_spectrum_csv(std::ostream& out, const SpectrumResult& spectrum);
// CSV `bin_left,bin_right,density`
void write_histogram_csv(std::ostream& out, const ESDHistogram& hist);

}  // namespace punctured
