#include "punctured/rank_one.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "punctured/errors.hpp"

namespace punctured {

namespace {

void check_factor_dims(const Shape3& shape, const Vector& u, const Vector& v, const Vector& w,
                       const char* what) {
  const Vector* f[3] = {&u, &v, &w};
  for (int mode = 1; mode <= 3; ++mode) {
    if (static_cast<std::size_t>(f[mode - 1]->size()) != shape.dim(mode)) {
      throw DimensionError(std::string(what) + ": factor " + std::to_string(mode) +
                           " has length " + std::to_string(f[mode - 1]->size()) +
                           ", expected " + std::to_string(shape.dim(mode)));
    }
  }
}

Vector normalized(const Vector& g, const char* factor) {
  const double n = g.norm();
  if (!(n > std::numeric_limits<double>::min()) || !std::isfinite(n)) {
    throw DegeneratePointError(std::string("zero contraction while updating ") + factor);
  }
  return g / n;
}

Vector random_unit(std::size_t n, std::mt19937_64& gen) {
  std::normal_distribution<double> normal;
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& e : v) e = normal(gen);
  return v / v.norm();
}

void initialize(const Shape3& shape, const SolverConfig& cfg, const RngSeed& rng, Vector& u,
                Vector& v, Vector& w) {
  switch (cfg.init) {
    case InitPolicy::Planted:
      if (!cfg.reference) {
        throw std::invalid_argument("planted initialization needs a reference signal");
      }
      u = cfg.reference->x;
      v = cfg.reference->y;
      w = cfg.reference->z;
      break;
    case InitPolicy::RandomUnit: {
      auto gen = rng.engine(RngPurpose::Init, cfg.init_salt);
      u = random_unit(shape.n1(), gen);
      v = random_unit(shape.n2(), gen);
      w = random_unit(shape.n3(), gen);
      break;
    }
    case InitPolicy::Supplied:
      if (!cfg.supplied) {
        throw std::invalid_argument("supplied initialization needs (u, v, w)");
      }
      u = normalized((*cfg.supplied)[0], "supplied u");
      v = normalized((*cfg.supplied)[1], "supplied v");
      w = normalized((*cfg.supplied)[2], "supplied w");
      break;
  }
  check_factor_dims(shape, u, v, w, "solve_critical_point");
}

}  // namespace

const Vector& CriticalPoint::factor(int mode) const {
  if (mode < 1 || mode > 3) throw RangeError("invalid mode");
  return mode == 1 ? u : (mode == 2 ? v : w);
}

Vector CriticalPoint::stacked() const {
  Vector s(u.size() + v.size() + w.size());
  s << u, v, w;
  return s;
}

SolveOutcome solve_traced(const Tensor3& tm, const SolverConfig& cfg, const RngSeed& rng) {
  if (!(cfg.tol > 0.0)) throw RangeError("solver tolerance must be positive");
  if (cfg.max_iter < 1) throw RangeError("solver max_iter must be at least 1");

  SolveOutcome out;
  Vector u, v, w;
  initialize(tm.shape(), cfg, rng, u, v, w);

  // Mode-3 residual of the current iterate. After a w update it is pure
  // rounding, so only the initial point needs a full contraction.
  double r3 = [&] {
    const Vector g3 = contract_mode(tm, 3, u, v);
    return (g3 - g3.dot(w) * w).lpNorm<Eigen::Infinity>();
  }();

  double residual = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter <= cfg.max_iter; ++iter) {
    // T(:, :, w) serves both the u update and the mode-1/mode-2 residuals.
    const Matrix m12 = contract_one(tm, 3, w);
    const Vector g1 = m12 * v;
    const double sigma = u.dot(g1);
    const double r1 = (g1 - sigma * u).lpNorm<Eigen::Infinity>();
    const double r2 = (m12.transpose() * u - sigma * v).lpNorm<Eigen::Infinity>();
    residual = std::max({r1, r2, r3});

    if (residual <= cfg.tol && sigma > 0.0) {
      out.point = CriticalPoint{sigma, std::move(u), std::move(v), std::move(w)};
      out.iterations = iter;
      out.residual = residual;
      break;
    }
    if (iter == cfg.max_iter) {
      throw ConvergenceError("power iteration did not converge in " +
                                 std::to_string(cfg.max_iter) + " sweeps",
                             residual);
    }

    u = normalized(g1, "u");
    const Vector g2 = m12.transpose() * u;
    v = normalized(g2, "v");
    const Vector g3 = contract_mode(tm, 3, u, v);
    const double s3 = g3.norm();
    w = normalized(g3, "w");
    r3 = (g3 - s3 * w).lpNorm<Eigen::Infinity>();
    if (cfg.track_objective) {
      out.objective.push_back(g1.norm());
      out.objective.push_back(g2.norm());
      out.objective.push_back(s3);
    }
  }

  // Sign convention: flipping two factors leaves sigma unchanged.
  if (cfg.reference) {
    CriticalPoint& p = out.point;
    if (cfg.reference->x.dot(p.u) < 0.0) {
      p.u = -p.u;
      p.v = -p.v;
    }
    if (cfg.reference->y.dot(p.v) < 0.0) {
      p.v = -p.v;
      p.w = -p.w;
    }
  }
  return out;
}

constexpr double kScreenSettled = 1e-7;

SolveOutcome solve_multistart(const Tensor3& tm, const SolverConfig& cfg, int starts, int screen_sweeps,
                              const RngSeed& rng) {
  if (starts < 1) throw RangeError("multistart needs at least one start");
  if (screen_sweeps < 0) throw RangeError("screen sweeps must be non-negative");
  const Shape3& shape = tm.shape();
  const auto n1 = static_cast<Eigen::Index>(shape.n1());
  const auto n2 = static_cast<Eigen::Index>(shape.n2());
  const auto n3 = static_cast<Eigen::Index>(shape.n3());
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMatrix> a(tm.data(), n1 * n2, n3);

  Matrix us(n1, starts), vs(n2, starts), ws(n3, starts);
  for (int r = 0; r < starts; ++r) {
    SolverConfig one = cfg;
    one.init = InitPolicy::RandomUnit;
    one.init_salt = static_cast<std::uint64_t>(r);
    Vector u, v, w;
    initialize(shape, one, rng, u, v, w);
    us.col(r) = u;
    vs.col(r) = v;
    ws.col(r) = w;
  }

  Vector sigma = Vector::Zero(starts);
  Matrix kr(n1 * n2, starts);
  int screened = 0;
  for (; screened < screen_sweeps; ++screened) {
    const Matrix y = a * ws;
    for (int r = 0; r < starts; ++r) {
      const Eigen::Map<const RowMatrix> m(y.col(r).data(), n1, n2);
      us.col(r) = normalized(m * vs.col(r), "u");
      vs.col(r) = normalized(m.transpose() * us.col(r), "v");
      Eigen::Map<Matrix>(kr.col(r).data(), n2, n1) = vs.col(r) * us.col(r).transpose();
    }
    const Matrix g = a.transpose() * kr;
    Vector moved(starts);
    for (int r = 0; r < starts; ++r) {
      sigma[r] = g.col(r).norm();
      const Vector w = normalized(g.col(r), "w");
      moved[r] = (w - ws.col(r)).lpNorm<Eigen::Infinity>();
      ws.col(r) = w;
    }
    // the leading start has settled into its basin
    Eigen::Index lead = 0;
    sigma.maxCoeff(&lead);
    if (moved[lead] <= kScreenSettled) {
      ++screened;
      break;
    }
  }

  Eigen::Index best = 0;
  if (screen_sweeps > 0) sigma.maxCoeff(&best);
  SolverConfig polish = cfg;
  polish.init = InitPolicy::Supplied;
  polish.supplied = std::array<Vector, 3>{us.col(best), vs.col(best), ws.col(best)};
  SolveOutcome out = solve_traced(tm, polish, rng);
  out.iterations += screened;
  return out;
}

CriticalPoint solve_critical_point(const Tensor3& tm, const SolverConfig& cfg, const RngSeed& rng) {
  return solve_traced(tm, cfg, rng).point;
}

CriticalPoint power_sweep(const Tensor3& tm, const CriticalPoint& cp) {
  check_factor_dims(tm.shape(), cp.u, cp.v, cp.w, "power_sweep");
  CriticalPoint next;
  const Matrix m12 = contract_one(tm, 3, cp.w);
  next.u = normalized(m12 * cp.v, "u");
  next.v = normalized(m12.transpose() * next.u, "v");
  const Vector g3 = contract_mode(tm, 3, next.u, next.v);
  next.sigma = g3.norm();
  next.w = normalized(g3, "w");
  return next;
}

double stationarity_residual(const Tensor3& tm, const CriticalPoint& cp) {
  check_factor_dims(tm.shape(), cp.u, cp.v, cp.w, "stationarity_residual");
  const double r1 = (contract_mode(tm, 1, cp.v, cp.w) - cp.sigma * cp.u).lpNorm<Eigen::Infinity>();
  const double r2 = (contract_mode(tm, 2, cp.u, cp.w) - cp.sigma * cp.v).lpNorm<Eigen::Infinity>();
  const double r3 = (contract_mode(tm, 3, cp.u, cp.v) - cp.sigma * cp.w).lpNorm<Eigen::Infinity>();
  return std::max({r1, r2, r3});
}

std::array<double, 3> alignments(const CriticalPoint& cp, const SignalTriple& signal) {
  check_factor_dims(signal.shape(), cp.u, cp.v, cp.w, "alignments");
  return {std::min(1.0, std::abs(signal.x.dot(cp.u))), std::min(1.0, std::abs(signal.y.dot(cp.v))),
          std::min(1.0, std::abs(signal.z.dot(cp.w)))};
}

double heuristic_gap(const Tensor3& t, const MaskTensor& m, const CriticalPoint& cp) {
  const double masked = contract_full(hadamard(t, m), cp.u, cp.v, cp.w);
  const double plain = contract_full(t, cp.u, cp.v, cp.w);
  return std::abs(masked - m.epsilon() * plain);
}

}  // namespace punctured
