#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "punctured/errors.hpp"
#include "punctured/phi.hpp"
#include "punctured/rank_one.hpp"

using namespace punctured;

namespace {

struct Instance {
  SignalTriple signal;
  Tensor3 noise;
  MaskTensor mask;
  Tensor3 tm;
  CriticalPoint cp;
};

Instance make_instance(const Shape3& s, double beta, double eps, std::uint64_t seed) {
  const RngSeed rng{seed, 0};
  SignalTriple sig = random_signal(s, beta, rng);
  Tensor3 noise = sample_noise(s, rng);
  MaskTensor mask = sample_mask(s, eps, rng);
  Tensor3 tm = hadamard(spiked_from_noise(sig, noise), mask);
  SolverConfig cfg;
  cfg.init = InitPolicy::Planted;
  cfg.reference = sig;
  CriticalPoint cp = solve_critical_point(tm, cfg, rng);
  return {std::move(sig), std::move(noise), std::move(mask), std::move(tm), std::move(cp)};
}

}  // namespace

TEST(BuildPhi, RankOneBlocks) {
  std::mt19937_64 gen(1);
  const Vector x = oracle::unit_vector(3, gen), y = oracle::unit_vector(4, gen), z = oracle::unit_vector(5, gen);
  const SignalTriple sig(x, y, z, 1.0);
  const Tensor3 t = spiked_from_noise(sig, Tensor3::zeros(Shape3(3, 4, 5)));
  const PhiMatrix phi = build_phi(t, x, y, z);
  const Matrix& m = phi.matrix();
  EXPECT_LT((m.block(0, 3, 3, 4) - x * y.transpose()).lpNorm<Eigen::Infinity>(), 1e-15);
  EXPECT_LT((m.block(0, 7, 3, 5) - x * z.transpose()).lpNorm<Eigen::Infinity>(), 1e-15);
  EXPECT_LT((m.block(3, 7, 4, 5) - y * z.transpose()).lpNorm<Eigen::Infinity>(), 1e-15);
  EXPECT_EQ(phi.offset(1), 0);
  EXPECT_EQ(phi.offset(2), 3);
  EXPECT_EQ(phi.offset(3), 7);
}

TEST(BuildPhi, MatchesTripleLoopOracleAndStructure) {
  const Shape3 s(3, 4, 5);
  std::mt19937_64 gen(2);
  const Tensor3 t = oracle::normal_tensor(s, gen);
  const Vector u = oracle::unit_vector(3, gen), v = oracle::unit_vector(4, gen), w = oracle::unit_vector(5, gen);
  const Matrix m = build_phi(t, u, v, w).matrix();
  EXPECT_LT((m - oracle::phi(t, u, v, w)).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_EQ(m, m.transpose());
  EXPECT_EQ(m.block(0, 0, 3, 3), Matrix::Zero(3, 3));
  EXPECT_EQ(m.block(3, 3, 4, 4), Matrix::Zero(4, 4));
  EXPECT_EQ(m.block(7, 7, 5, 5), Matrix::Zero(5, 5));
  EXPECT_EQ(build_phi(Tensor3::zeros(s), u, v, w).matrix(), Matrix::Zero(12, 12));
  EXPECT_THROW(build_phi(t, v, v, w), DimensionError);
}

TEST(EigenSpectrum, ToyAndTrace) {
  Matrix toy(2, 2);
  toy << 0, 1, 1, 0;
  const SpectrumResult r = eigen_spectrum(toy, true);
  EXPECT_NEAR(r.eigenvalues[0], 1.0, 1e-15);
  EXPECT_NEAR(r.eigenvalues[1], -1.0, 1e-15);
  ASSERT_TRUE(r.eigenvectors);
  EXPECT_LT((toy * r.eigenvectors->col(0) - r.eigenvectors->col(0)).norm(), 1e-14);
  EXPECT_EQ(r.zero_count, 0u);

  const Instance in = make_instance(Shape3(10, 12, 30), 4.0, 0.5, 3);
  const SpectrumResult sp = eigen_spectrum(build_phi(in.tm, in.cp), false);
  EXPECT_NEAR(sp.eigenvalues.sum(), 0.0, 1e-8 * 52);
  for (Eigen::Index n = 1; n < sp.eigenvalues.size(); ++n) EXPECT_GE(sp.eigenvalues[n - 1], sp.eigenvalues[n]);
}

TEST(EigenSpectrum, ZeroCountAtSkewedShape) {
  const Instance in = make_instance(Shape3(100, 200, 700), 4.0, 0.25, 1);
  const SpectrumResult sp = eigen_spectrum(build_phi(in.tm, in.cp), false);
  EXPECT_GE(sp.zero_count, 400u);
  const ESDHistogram h = esd_histogram(sp, 60, true);
  EXPECT_EQ(h.excluded_zero_count, sp.zero_count);
  EXPECT_NEAR(static_cast<double>(h.excluded_zero_count), 400.0, 5.0);
  EXPECT_NEAR(static_cast<double>(h.included), 600.0, 5.0);
}

TEST(Structural, NoiselessSpectrumIsTwoBetaMinusBetaZero) {
  const Shape3 s(4, 5, 6);
  const SignalTriple sig = random_signal(s, 3.0, RngSeed{4, 0});
  const Tensor3 t = spiked_from_noise(sig, Tensor3::zeros(s));
  const CriticalPoint cp{3.0, sig.x, sig.y, sig.z};
  const SpectrumResult sp = eigen_spectrum(build_phi(t, cp), false);
  // direct eigensolve of the 3 x 3 core with unit alignments: {2, -1, -1} * beta
  Eigen::Matrix3d core;
  core << 0, 1, 1, 1, 0, 1, 1, 1, 0;
  Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(core).eigenvalues() * 3.0;
  EXPECT_NEAR(sp.eigenvalues[0], ev[2], 1e-12);
  EXPECT_NEAR(sp.eigenvalues[13], ev[0], 1e-12);
  EXPECT_NEAR(sp.eigenvalues[14], ev[1], 1e-12);
  EXPECT_EQ(sp.zero_count, 12u);
}

TEST(Structural, ConvergedPointPassesAllItems) {
  const Instance in = make_instance(Shape3(15, 20, 25), 4.0, 0.6, 5);
  const PhiMatrix phi = build_phi(in.tm, in.cp);
  const StructuralReport r = check_structural_eigenpairs(phi, in.cp, 1e-8);
  EXPECT_TRUE(r.pass) << r.failure;
  EXPECT_LE(r.top_residual, 1e-8);
  EXPECT_LE(r.minus_residual, 1e-8);
  EXPECT_LE(r.upper_excess, 1e-8);
  EXPECT_LE(r.lower_excess, 1e-8);
}

TEST(Structural, SigmaPerturbationFailsTopItem) {
  const Instance in = make_instance(Shape3(15, 20, 25), 4.0, 0.6, 6);
  const PhiMatrix phi = build_phi(in.tm, in.cp);
  CriticalPoint off = in.cp;
  const double delta = 1e-3;
  off.sigma += delta;
  const StructuralReport r = check_structural_eigenpairs(phi, off, 1e-8);
  EXPECT_FALSE(r.pass);
  EXPECT_NE(r.failure.find("2*sigma"), std::string::npos) << r.failure;
  // Phi s - 2 (sigma + delta) s = -2 delta s with |s| = sqrt(3)
  EXPECT_NEAR(r.top_residual, 2.0 * delta * std::sqrt(3.0), 1e-9);
}

TEST(SpikeDecomposition, ExactWithoutMaskAndForZeroSignal) {
  const Shape3 s(6, 7, 8);
  const RngSeed rng{7, 0};
  const SignalTriple sig = random_signal(s, 3.0, rng);
  const Tensor3 noise = sample_noise(s, rng);
  const Tensor3 t = spiked_from_noise(sig, noise);
  SolverConfig cfg;
  cfg.init = InitPolicy::Planted;
  cfg.reference = sig;
  const CriticalPoint cp = solve_critical_point(t, cfg, rng);
  const Tensor3 t0 = noise.scaled(1.0 / std::sqrt(static_cast<double>(s.total())));
  const PhiMatrix phi = build_phi(t, cp);
  const PhiMatrix phi0 = build_phi(t0, cp);
  EXPECT_LT(spike_decomposition_residual(phi, sig, cp, phi0, 1.0), 1e-12);
  // beta -> 0 limit: Phi built from the noise alone with zero spike weight
  EXPECT_EQ(spike_decomposition_residual(phi0, sig, cp, phi0, 0.0), 0.0);
}

TEST(SpikeDecomposition, ResidualShrinksWithN) {
  auto median_e = [](const Shape3& s) {
    std::vector<double> es;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const RngSeed rng{seed, 77};
      const SignalTriple sig = random_signal(s, 4.0, rng);
      const Tensor3 noise = sample_noise(s, rng);
      const MaskTensor mask = sample_mask(s, 0.25, rng);
      const Tensor3 tm = hadamard(spiked_from_noise(sig, noise), mask);
      SolverConfig cfg;
      cfg.init = InitPolicy::Planted;
      cfg.reference = sig;
      const CriticalPoint cp = solve_critical_point(tm, cfg, rng);
      const Tensor3 t0 = hadamard(noise.scaled(1.0 / std::sqrt(static_cast<double>(s.total()))), mask);
      es.push_back(spike_decomposition_residual(build_phi(tm, cp), sig, cp, build_phi(t0, cp), 0.25));
    }
    std::sort(es.begin(), es.end());
    return 0.5 * (es[4] + es[5]);
  };
  EXPECT_LT(median_e(Shape3(100, 200, 700)), median_e(Shape3(25, 50, 175)));
}

TEST(Resolvent, TrivialAndSpectralMapping) {
  const Shape3 s(2, 2, 2);
  const PhiMatrix zero(s, Matrix::Zero(6, 6));
  Vector r(6);
  r << 1, 2, 3, 4, 5, 6;
  EXPECT_LT((resolvent_solve(zero, 1.0, r) + r).norm(), 1e-15);

  const Instance in = make_instance(Shape3(5, 6, 7), 4.0, 0.8, 8);
  const PhiMatrix phi = build_phi(in.tm, in.cp);
  const SpectrumResult sp = eigen_spectrum(phi, true);
  const double sigma = in.cp.sigma;
  for (int n : {0, 3, 9}) {
    const Vector e = sp.eigenvectors->col(n);
    const Vector q = resolvent_solve(phi, sigma, e);
    EXPECT_LT((q - e / (sp.eigenvalues[n] - sigma)).norm(), 1e-10);
  }
  std::mt19937_64 gen(8);
  const Vector rhs = oracle::normal_vector(18, gen);
  const Vector q = resolvent_solve(phi, sigma, rhs);
  EXPECT_LT(((phi.matrix() - sigma * Matrix::Identity(18, 18)) * q - rhs).norm(), 1e-10);
  const Resolvent res(phi, sigma);
  Matrix inv(18, 18);
  for (int c = 0; c < 18; ++c) inv.col(c) = res.solve(Vector::Unit(18, c));
  EXPECT_LT((inv * (phi.matrix() - sigma * Matrix::Identity(18, 18)) - Matrix::Identity(18, 18)).norm(), 1e-9);
}

TEST(Resolvent, SingularThrows) {
  Matrix toy = Matrix::Zero(6, 6);
  toy(0, 3) = toy(3, 0) = 1.0;
  const PhiMatrix phi(Shape3(2, 2, 2), toy);
  try {
    (void)Resolvent(phi, 1.0);
    FAIL() << "expected SingularResolventError";
  } catch (const SingularResolventError& e) {
    EXPECT_LE(e.gap(), 1e-8);
  }
}

TEST(FactorDerivative, MaskedEntryAndTangency) {
  const Instance in = make_instance(Shape3(4, 5, 6), 3.0, 0.7, 9);
  const PhiMatrix phi = build_phi(in.tm, in.cp);
  EXPECT_EQ(predict_factor_derivative(phi, in.cp, 1, 2, 3, 0, 15), Vector::Zero(15));
  const Vector d = predict_factor_derivative(phi, in.cp, 1, 2, 3, 1, 15);
  EXPECT_GT(d.norm(), 0.0);
  EXPECT_NEAR(d.head(4).dot(in.cp.u), 0.0, 1e-10);
  EXPECT_NEAR(d.segment(4, 5).dot(in.cp.v), 0.0, 1e-10);
  EXPECT_NEAR(d.tail(6).dot(in.cp.w), 0.0, 1e-10);
}

TEST(FactorDerivative, MatchesCentralDifferences) {
  const Instance in = make_instance(Shape3(4, 5, 6), 3.0, 0.7, 10);
  const Resolvent q(build_phi(in.tm, in.cp), in.cp.sigma);
  SolverConfig follow;
  follow.init = InitPolicy::Supplied;
  follow.tol = 1e-14;
  follow.max_iter = 100000;
  follow.supplied = std::array<Vector, 3>{in.cp.u, in.cp.v, in.cp.w};
  const double h = 1e-5;
  const Shape3& s = in.tm.shape();
  std::mt19937_64 gen(10);
  std::uniform_int_distribution<std::size_t> di(0, 3), dj(0, 4), dk(0, 5);
  for (int e = 0; e < 20; ++e) {
    const std::size_t i = di(gen), j = dj(gen), k = dk(gen);
    auto solve_at = [&](double delta) {
      std::vector<double> g = in.noise.values();
      g[s.offset(i, j, k)] += delta;
      const Tensor3 t = hadamard(spiked_from_noise(in.signal, Tensor3(s, g)), in.mask);
      return solve_critical_point(t, follow, RngSeed{}).stacked();
    };
    const Vector fd = (solve_at(h) - solve_at(-h)) / (2 * h);
    const Vector pred = predict_factor_derivative(q, in.cp, i, j, k, in.mask(i, j, k), s.total());
    const double err = (pred - fd).lpNorm<Eigen::Infinity>();
    if (in.mask(i, j, k) == 0) {
      EXPECT_EQ(pred, Vector::Zero(15));
      EXPECT_LT(fd.lpNorm<Eigen::Infinity>(), 1e-12);
    } else {
      EXPECT_LT(err / fd.lpNorm<Eigen::Infinity>(), 1e-3) << "entry " << i << j << k;
    }
  }
}

TEST(Histogram, SingleValueAndNormalization) {
  SpectrumResult same;
  same.eigenvalues = Vector::Constant(7, 0.3);
  const ESDHistogram h = esd_histogram(same, 10, false);
  std::size_t occupied = 0;
  for (auto c : h.counts) occupied += c > 0;
  EXPECT_EQ(occupied, 1u);

  std::mt19937_64 gen(11);
  SpectrumResult r;
  r.eigenvalues = oracle::normal_vector(500, gen);
  for (int bins : {1, 7, 60}) {
    const ESDHistogram hh = esd_histogram(r, bins, false);
    double area = 0.0;
    std::size_t total = 0;
    for (int b = 0; b < bins; ++b) {
      area += hh.density[b] * (hh.bin_edges[b + 1] - hh.bin_edges[b]);
      total += hh.counts[b];
    }
    EXPECT_NEAR(area, 1.0, 1e-12);
    EXPECT_EQ(total, hh.included);
  }
  EXPECT_THROW(esd_histogram(r, 0, false), RangeError);
}

TEST(Export, CsvFormats) {
  SpectrumResult r;
  r.eigenvalues = Vector::LinSpaced(3, 1.0, -1.0);
  std::ostringstream a;
  write_spectrum_csv(a, r);
  EXPECT_EQ(a.str().substr(0, 17), "index,eigenvalue\n");
  const ESDHistogram h = esd_histogram(r, 2, false);
  std::ostringstream b;
  write_histogram_csv(b, h);
  EXPECT_EQ(b.str().substr(0, 27), "bin_left,bin_right,density\n");
  const std::string text = b.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}
