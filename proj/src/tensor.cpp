#include "punctured/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "punctured/errors.hpp"

namespace punctured {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

void check_mode(int mode) {
  if (mode < 1 || mode > 3) {
    throw RangeError("invalid mode " + std::to_string(mode) + " (expected 1, 2 or 3)");
  }
}

void check_length(const Vector& v, std::size_t expected, int mode, const char* what) {
  if (static_cast<std::size_t>(v.size()) != expected) {
    throw DimensionError(std::string(what) + ": vector for mode " + std::to_string(mode) +
                         " has length " + std::to_string(v.size()) + ", expected " +
                         std::to_string(expected));
  }
}

// Row-major (n1*n2) x n3 view: row (i*n2 + j) holds t(i, j, :).
ConstRowMap unfold_last(const Tensor3& t) {
  const auto& s = t.shape();
  return ConstRowMap(t.data(), static_cast<Eigen::Index>(s.n1() * s.n2()),
                     static_cast<Eigen::Index>(s.n3()));
}

// Row-major n2 x n3 view of the slab t(i, :, :).
ConstRowMap slab(const Tensor3& t, std::size_t i) {
  const auto& s = t.shape();
  return ConstRowMap(t.data() + i * s.n2() * s.n3(), static_cast<Eigen::Index>(s.n2()),
                     static_cast<Eigen::Index>(s.n3()));
}

// kron(a, b)[i*n2 + j] = a_i b_j
Vector kron(const Vector& a, const Vector& b) {
  Vector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    out.segment(i * b.size(), b.size()) = a[i] * b;
  }
  return out;
}

Vector unit_normal(std::size_t n, std::mt19937_64& gen) {
  std::normal_distribution<double> normal;
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& e : v) e = normal(gen);
  return v / v.norm();
}

}  // namespace

Shape3::Shape3(std::size_t n1, std::size_t n2, std::size_t n3) : dims_{n1, n2, n3} {
  if (n1 == 0 || n2 == 0 || n3 == 0) {
    throw DimensionError("tensor dimensions must be positive");
  }
}

std::size_t Shape3::dim(int mode) const {
  check_mode(mode);
  return dims_[mode - 1];
}

double Shape3::ratio(int mode) const {
  return static_cast<double>(dim(mode)) / static_cast<double>(total());
}

Tensor3::Tensor3(Shape3 shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  if (values_.size() != shape_.entries()) {
    throw DimensionError("tensor value count " + std::to_string(values_.size()) +
                         " does not match shape (" + std::to_string(shape_.entries()) + ")");
  }
  if (!std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); })) {
    throw RangeError("tensor entries must be finite");
  }
}

Tensor3 Tensor3::zeros(Shape3 shape) {
  return Tensor3(shape, std::vector<double>(shape.entries(), 0.0));
}

Tensor3 Tensor3::scaled(double alpha) const {
  std::vector<double> out(values_);
  for (auto& v : out) v *= alpha;
  return Tensor3(shape_, std::move(out));
}

MaskTensor::MaskTensor(Shape3 shape, std::vector<std::uint8_t> bits, double epsilon)
    : shape_(shape), bits_(std::move(bits)), epsilon_(epsilon) {
  if (bits_.size() != shape_.entries()) {
    throw DimensionError("mask entry count does not match shape");
  }
  if (!(epsilon_ >= 0.0 && epsilon_ <= 1.0)) {
    throw RangeError("mask epsilon must lie in [0, 1]");
  }
  if (!std::all_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b <= 1; })) {
    throw RangeError("mask entries must be 0 or 1");
  }
}

std::size_t MaskTensor::ones() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double MaskTensor::fill_fraction() const noexcept {
  return static_cast<double>(ones()) / static_cast<double>(bits_.size());
}

SignalTriple::SignalTriple(Vector x_, Vector y_, Vector z_, double beta_)
    : x(std::move(x_)), y(std::move(y_)), z(std::move(z_)), beta(beta_) {
  if (x.size() == 0 || y.size() == 0 || z.size() == 0) {
    throw DimensionError("signal vectors must be non-empty");
  }
  for (const Vector* v : {&x, &y, &z}) {
    if (std::abs(v->norm() - 1.0) > 1e-12) {
      throw RangeError("signal vectors must have unit norm");
    }
  }
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw RangeError("signal strength beta must be positive");
  }
}

Shape3 SignalTriple::shape() const {
  return Shape3(static_cast<std::size_t>(x.size()), static_cast<std::size_t>(y.size()),
                static_cast<std::size_t>(z.size()));
}

const Vector& SignalTriple::factor(int mode) const {
  check_mode(mode);
  return mode == 1 ? x : (mode == 2 ? y : z);
}

SignalTriple random_signal(const Shape3& shape, double beta, const RngSeed& rng) {
  auto gen = rng.engine(RngPurpose::Signal);
  Vector x = unit_normal(shape.n1(), gen);
  Vector y = unit_normal(shape.n2(), gen);
  Vector z = unit_normal(shape.n3(), gen);
  return SignalTriple(std::move(x), std::move(y), std::move(z), beta);
}

SignalTriple ones_signal(const Shape3& shape, double beta) {
  auto ones = [](std::size_t n) {
    Vector v = Vector::Ones(static_cast<Eigen::Index>(n));
    return Vector(v / v.norm());
  };
  return SignalTriple(ones(shape.n1()), ones(shape.n2()), ones(shape.n3()), beta);
}

Tensor3 sample_noise(const Shape3& shape, const RngSeed& rng) {
  auto gen = rng.engine(RngPurpose::Noise);
  std::normal_distribution<double> normal;
  std::vector<double> values(shape.entries());
  for (auto& v : values) v = normal(gen);
  return Tensor3(shape, std::move(values));
}

Tensor3 spiked_from_noise(const SignalTriple& signal, const Tensor3& noise) {
  const Shape3& shape = noise.shape();
  for (int mode = 1; mode <= 3; ++mode) {
    check_length(signal.factor(mode), shape.dim(mode), mode, "generate_spiked");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(shape.total()));
  std::vector<double> values(shape.entries());
  const double* g = noise.data();
  std::size_t at = 0;
  for (std::size_t i = 0; i < shape.n1(); ++i) {
    const double bx = signal.beta * signal.x[static_cast<Eigen::Index>(i)];
    for (std::size_t j = 0; j < shape.n2(); ++j) {
      const double bxy = bx * signal.y[static_cast<Eigen::Index>(j)];
      for (std::size_t k = 0; k < shape.n3(); ++k, ++at) {
        values[at] = bxy * signal.z[static_cast<Eigen::Index>(k)] + scale * g[at];
      }
    }
  }
  return Tensor3(shape, std::move(values));
}

Tensor3 generate_spiked(const Shape3& shape, const SignalTriple& signal, const RngSeed& rng) {
  for (int mode = 1; mode <= 3; ++mode) {
    check_length(signal.factor(mode), shape.dim(mode), mode, "generate_spiked");
  }
  return spiked_from_noise(signal, sample_noise(shape, rng));
}

MaskTensor sample_mask(const Shape3& shape, double epsilon, const RngSeed& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw RangeError("mask probability epsilon must lie in [0, 1]");
  }
  auto gen = rng.engine(RngPurpose::Mask);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<std::uint8_t> bits(shape.entries());
  for (auto& b : bits) b = uniform(gen) < epsilon ? 1 : 0;
  return MaskTensor(shape, std::move(bits), epsilon);
}

MaskTensor full_mask(const Shape3& shape) {
  return MaskTensor(shape, std::vector<std::uint8_t>(shape.entries(), 1), 1.0);
}

Tensor3 hadamard(const Tensor3& t, const MaskTensor& m) {
  if (!(t.shape() == m.shape())) {
    throw DimensionError("hadamard: tensor and mask shapes differ");
  }
  std::vector<double> out(t.values().size());
  const auto& bits = m.bits();
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = bits[n] ? t.values()[n] : 0.0;
  return Tensor3(t.shape(), std::move(out));
}

double contract_full(const Tensor3& t, const Vector& a, const Vector& b, const Vector& c) {
  const auto& s = t.shape();
  check_length(a, s.n1(), 1, "contract_full");
  check_length(b, s.n2(), 2, "contract_full");
  check_length(c, s.n3(), 3, "contract_full");
  return kron(a, b).dot(unfold_last(t) * c);
}

Vector contract_mode(const Tensor3& t, int mode, const Vector& p, const Vector& q) {
  check_mode(mode);
  const auto& s = t.shape();
  switch (mode) {
    case 1:
      check_length(p, s.n2(), 2, "contract_mode");
      check_length(q, s.n3(), 3, "contract_mode");
      return contract_one(t, 3, q) * p;
    case 2:
      check_length(p, s.n1(), 1, "contract_mode");
      check_length(q, s.n3(), 3, "contract_mode");
      return contract_one(t, 3, q).transpose() * p;
    default:
      check_length(p, s.n1(), 1, "contract_mode");
      check_length(q, s.n2(), 2, "contract_mode");
      return unfold_last(t).transpose() * kron(p, q);
  }
}

Matrix contract_one(const Tensor3& t, int mode, const Vector& p) {
  check_mode(mode);
  const auto& s = t.shape();
  check_length(p, s.dim(mode), mode, "contract_one");
  const auto n1 = static_cast<Eigen::Index>(s.n1());
  const auto n2 = static_cast<Eigen::Index>(s.n2());
  const auto n3 = static_cast<Eigen::Index>(s.n3());
  switch (mode) {
    case 3: {
      Vector flat = unfold_last(t) * p;
      return Eigen::Map<const RowMatrix>(flat.data(), n1, n2);
    }
    case 2: {
      Matrix out(n1, n3);
      for (Eigen::Index i = 0; i < n1; ++i) {
        out.row(i) = p.transpose() * slab(t, static_cast<std::size_t>(i));
      }
      return out;
    }
    default: {
      Matrix out = Matrix::Zero(n2, n3);
      for (Eigen::Index i = 0; i < n1; ++i) {
        out.noalias() += p[i] * slab(t, static_cast<std::size_t>(i));
      }
      return out;
    }
  }
}

}  // namespace punctured
