#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "punctured/rng.hpp"

namespace punctured {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Dimensions (n1, n2, n3) of an order-3 tensor together with the derived
// total N = n1 + n2 + n3 and the mode ratios c_l = n_l / N.
class Shape3 {
public:
  Shape3(std::size_t n1, std::size_t n2, std::size_t n3);

  std::size_t n1() const noexcept { return dims_[0]; }
  std::size_t n2() const noexcept { return dims_[1]; }
  std::size_t n3() const noexcept { return dims_[2]; }

  // Dimension of mode 1, 2 or 3.
  std::size_t dim(int mode) const;

  std::size_t total() const noexcept { return dims_[0] + dims_[1] + dims_[2]; }
  std::size_t entries() const noexcept { return dims_[0] * dims_[1] * dims_[2]; }

  // c_l = n_l / N for l = 1, 2, 3.
  double ratio(int mode) const;

  // Offset of entry (i, j, k) in the linear storage order: k fastest, then j,
  // then i.
  std::size_t offset(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return (i * dims_[1] + j) * dims_[2] + k;
  }

  friend bool operator==(const Shape3&, const Shape3&) = default;

private:
  std::size_t dims_[3];
};

// Dense real n1 x n2 x n3 array, stored with k fastest, then j, then i.
class Tensor3 {
public:
  Tensor3(Shape3 shape, std::vector<double> values);

  static Tensor3 zeros(Shape3 shape);

  const Shape3& shape() const noexcept { return shape_; }
  const std::vector<double>& values() const noexcept { return values_; }
  const double* data() const noexcept { return values_.data(); }

  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[shape_.offset(i, j, k)];
  }

  Tensor3 scaled(double alpha) const;

private:
  Shape3 shape_;
  std::vector<double> values_;
};

// Bernoulli 0/1 mask of the same layout as Tensor3.
class MaskTensor {
public:
  MaskTensor(Shape3 shape, std::vector<std::uint8_t> bits, double epsilon);

  const Shape3& shape() const noexcept { return shape_; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  // Probability the mask was sampled with.
  double epsilon() const noexcept { return epsilon_; }

  std::uint8_t operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return bits_[shape_.offset(i, j, k)];
  }

  std::size_t ones() const noexcept;
  double fill_fraction() const noexcept;

private:
  Shape3 shape_;
  std::vector<std::uint8_t> bits_;
  double epsilon_;
};

// Planted signal beta * x (x) y (x) z with unit-norm x, y, z and beta > 0.
struct SignalTriple {
  SignalTriple(Vector x, Vector y, Vector z, double beta);

  Vector x;
  Vector y;
  Vector z;
  double beta;

  Shape3 shape() const;
  const Vector& factor(int mode) const;
};

// Standard normal directions, normalized.
SignalTriple random_signal(const Shape3& shape, double beta, const RngSeed& rng);

// Normalized all-ones directions; deterministic, for regression tests.
SignalTriple ones_signal(const Shape3& shape, double beta);

// i.i.d. N(0, 1) array G, unscaled.
Tensor3 sample_noise(const Shape3& shape, const RngSeed& rng);

// beta x (x) y (x) z + G / sqrt(N) for a caller-supplied noise array G.
Tensor3 spiked_from_noise(const SignalTriple& signal, const Tensor3& noise);

// beta x (x) y (x) z + G / sqrt(N) with G drawn from rng.
Tensor3 generate_spiked(const Shape3& shape, const SignalTriple& signal, const RngSeed& rng);

// Each entry independently 1 with probability epsilon. One uniform variate is
// drawn per entry, so for a fixed rng masks are nested in epsilon.
MaskTensor sample_mask(const Shape3& shape, double epsilon, const RngSeed& rng);

MaskTensor full_mask(const Shape3& shape);

Tensor3 hadamard(const Tensor3& t, const MaskTensor& m);

// sum_{i,j,k} t_ijk a_i b_j c_k
double contract_full(const Tensor3& t, const Vector& a, const Vector& b, const Vector& c);

// T(:, p, q), T(p, :, q) or T(p, q, :) for mode 1, 2, 3. p and q belong to the
// two remaining modes in ascending order.
Vector contract_mode(const Tensor3& t, int mode, const Vector& p, const Vector& q);

// Contract one mode against p. Mode 3 yields the n1 x n2 matrix
// sum_k t_ijk p_k, mode 2 the n1 x n3 matrix, mode 1 the n2 x n3 matrix.
Matrix contract_one(const Tensor3& t, int mode, const Vector& p);

}  // namespace punctured
