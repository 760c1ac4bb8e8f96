#pragma once

// Joint multi-body reconstruction and self-expression by ADMM.
//
// Problem (camera R held fixed):
//
//   min  1/2 ||W - R S||_F^2 + lambda1 ||E||_1 + lambda2 ||S#||_*
//   s.t. S# = g(S),  S = S C,  C D = E,  1^T C = 1^T,  diag(C) = 0
//
// where D is [I | neighbour differences] for dense grids, or I alone for
// sparse tracks. Each sweep updates S, S#, E, C in closed form, then the four
// multipliers and the penalty beta. diag(C) = 0 is imposed on the C update
// directly and has no multiplier.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mbnrsfm/error.hpp"
#include "mbnrsfm/linalg.hpp"
#include "mbnrsfm/scene.hpp"

namespace mbnrsfm {

struct SolverConfig {
  double lambda1 = 0.1;
  // Unset means 1 / sqrt(3 max(F, P)).
  std::optional<double> lambda2;
  double beta0 = 1e-2;
  double rho = 1.1;
  double beta_max = 1e6;
  double epsilon = 1e-4;
  int max_iters = 500;
  std::uint64_t seed = 0;

  double resolved_lambda2(Index frames, Index points) const {
    if (lambda2) return *lambda2;
    return 1.0 / std::sqrt(3.0 * static_cast<double>(std::max(frames, points)));
  }

  void validate() const {
    if (!(lambda1 > 0.0)) throw ValueError("SolverConfig: lambda1 must be positive");
    if (lambda2 && !(*lambda2 > 0.0)) throw ValueError("SolverConfig: lambda2 must be positive");
    if (!(beta0 > 0.0)) throw ValueError("SolverConfig: beta0 must be positive");
    if (!(rho > 1.0)) throw ValueError("SolverConfig: rho must exceed 1");
    if (!(beta_max >= beta0)) throw ValueError("SolverConfig: beta_max must be >= beta0");
    if (!(epsilon > 0.0)) throw ValueError("SolverConfig: epsilon must be positive");
    if (max_iters < 0) throw ValueError("SolverConfig: max_iters must be >= 0");
  }
};

/// Fixed data of one solve, with the products reused every sweep.
class Problem {
 public:
  /// `extension` is [I D] (P x 5P) for dense tracks or I (P x P) for sparse.
  Problem(const MeasurementMatrix& w, const CameraMotion& r, DenseMatrix extension,
          double lambda1, double lambda2)
      : frames_(w.frames()),
        points_(w.points()),
        w_(w.data()),
        r_(r.block_diagonal()),
        d_(std::move(extension)),
        lambda1_(lambda1),
        lambda2_(lambda2) {
    if (r.frames() != frames_) {
      throw DimensionError("Problem: tracks have " + std::to_string(frames_) +
                           " frames, camera has " + std::to_string(r.frames()));
    }
    if (d_.rows() != points_) {
      throw DimensionError("Problem: extension must have P = " + std::to_string(points_) +
                           " rows, got " + dims(d_.rows(), d_.cols()));
    }
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ValueError("Problem: negative weight");
    rtr_ = r_.transpose() * r_;
    rtw_ = r_.transpose() * w_;
    ddt_ = d_ * d_.transpose();
  }

  /// Sparse mode when `grid` is empty, dense mode with [I D] otherwise.
  static Problem make(const MeasurementMatrix& w, const CameraMotion& r,
                      const std::optional<NeighborMatrix>& grid, const SolverConfig& cfg) {
    DenseMatrix ext;
    if (grid) {
      if (grid->points() != w.points()) {
        throw DimensionError("Problem: grid has " + std::to_string(grid->points()) +
                             " points, tracks have " + std::to_string(w.points()));
      }
      ext = extend_with_identity(*grid);
    } else {
      ext = identity_extension(w.points());
    }
    return Problem(w, r, std::move(ext), cfg.lambda1,
                   cfg.resolved_lambda2(w.frames(), w.points()));
  }

  Index frames() const { return frames_; }
  Index points() const { return points_; }
  const DenseMatrix& W() const { return w_; }
  const DenseMatrix& R() const { return r_; }
  const DenseMatrix& D() const { return d_; }
  const DenseMatrix& RtR() const { return rtr_; }
  const DenseMatrix& RtW() const { return rtw_; }
  const DenseMatrix& DDt() const { return ddt_; }
  double lambda1() const { return lambda1_; }
  double lambda2() const { return lambda2_; }

 private:
  Index frames_, points_;
  DenseMatrix w_, r_, d_, rtr_, rtw_, ddt_;
  double lambda1_, lambda2_;
};

struct DualState {
  DenseMatrix Y1;  // F x 3P
  DenseMatrix Y2;  // 3F x P
  DenseMatrix Y3;  // P x cols(D)
  RowVector Y4;    // 1 x P
  double beta = 0.0;
};

/// One ADMM iterate.
struct SolverState {
  DenseMatrix S;       // 3F x P
  DenseMatrix Ssharp;  // F x 3P
  DenseMatrix E;       // P x cols(D)
  DenseMatrix C;       // P x P
  DualState duals;
};

/// Infinity-norm violations of the four equality constraints.
struct Residuals {
  double r1 = 0.0;  // S# - g(S)
  double r2 = 0.0;  // S - S C
  double r3 = 0.0;  // C D - E
  double r4 = 0.0;  // 1^T C - 1^T

  double max() const { return std::max({r1, r2, r3, r4}); }
};

struct TraceRecord {
  int iteration = 0;  // 1-based
  double objective = 0.0;
  Residuals residuals;
  double beta = 0.0;  // penalty used by this sweep
};

struct SolverTrace {
  std::vector<TraceRecord> records;
  bool converged = false;
  int iterations() const { return static_cast<int>(records.size()); }
};

struct SolveResult {
  ShapeState shape;  // Ssharp == reshuffle_g(S)
  CoefficientMatrix C;
  SolverTrace trace;
  SolverState final_state;  // raw iterate, including E and multipliers
};

// C-update left operand shift keeping S^T S + 1 1^T strictly positive definite.
inline constexpr double kCoefficientShift = 1e-10;

// ---------------------------------------------------------------------------

/// Per-frame minimum-norm solution of R_f S_f = W_f: S_f = R_f^T (R_f R_f^T)^-1 W_f.
inline DenseMatrix pseudo_inverse_shape(const MeasurementMatrix& w, const CameraMotion& r) {
  if (w.frames() != r.frames()) {
    throw DimensionError("pseudo_inverse_shape: frame counts differ");
  }
  DenseMatrix s(3 * w.frames(), w.points());
  for (Index f = 0; f < w.frames(); ++f) {
    const CameraBlock& rf = r.block(f);
    const Eigen::Matrix2d gram = rf * rf.transpose();
    s.middleRows(3 * f, 3).noalias() =
        rf.transpose() * gram.ldlt().solve(w.data().middleRows(2 * f, 2));
  }
  return s;
}

/// Initial iterate: given (or pseudo-inverse) S, S# = g(S), C = 0, E = 0,
/// multipliers 0 and beta = beta0.
inline SolverState initial_state(const Problem& pb, const SolverConfig& cfg,
                                 const MeasurementMatrix& w, const CameraMotion& r,
                                 const std::optional<DenseMatrix>& init_s) {
  const Index f = pb.frames(), p = pb.points();
  SolverState st;
  if (init_s) {
    if (init_s->rows() != 3 * f || init_s->cols() != p) {
      throw DimensionError("initial shape must be " + dims(3 * f, p) + ", got " +
                           dims(init_s->rows(), init_s->cols()));
    }
    require_finite(*init_s, "initial shape");
    st.S = *init_s;
  } else {
    st.S = pseudo_inverse_shape(w, r);
  }
  st.Ssharp = reshuffle_g(st.S);
  st.C = DenseMatrix::Zero(p, p);
  st.E = DenseMatrix::Zero(p, pb.D().cols());
  st.duals.Y1 = DenseMatrix::Zero(f, 3 * p);
  st.duals.Y2 = DenseMatrix::Zero(3 * f, p);
  st.duals.Y3 = DenseMatrix::Zero(p, pb.D().cols());
  st.duals.Y4 = RowVector::Zero(p);
  st.duals.beta = cfg.beta0;
  return st;
}

// ---------------------------------------------------------------------------
// Primal updates. Each returns the closed-form minimiser of the augmented
// Lagrangian in one block with the others held at `st`.

/// Operands (A, B, Q) of the S-update Sylvester equation A S + S B = Q:
///   A = (R^T R + beta I) / beta
///   B = (I - C)(I - C^T)
///   Q = R^T W / beta + g^-1(S#) + g^-1(Y1) / beta - (Y2 / beta)(I - C^T)
struct SylvesterOperands {
  DenseMatrix A, B, Q;
};

inline SylvesterOperands s_update_operands(const SolverState& st, const Problem& pb) {
  const double beta = st.duals.beta;
  const Index p = pb.points();
  DenseMatrix i_minus_c = DenseMatrix::Identity(p, p) - st.C;
  SylvesterOperands ops;
  ops.A = pb.RtR() / beta;
  ops.A.diagonal().array() += 1.0;
  ops.B = i_minus_c * i_minus_c.transpose();
  symmetrize(ops.A);
  symmetrize(ops.B);
  ops.Q = pb.RtW() / beta + reshuffle_g_inv(st.Ssharp) + reshuffle_g_inv(st.duals.Y1) / beta -
          (st.duals.Y2 / beta) * i_minus_c.transpose();
  return ops;
}

inline DenseMatrix update_S(const SolverState& st, const Problem& pb) {
  const SylvesterOperands ops = s_update_operands(st, pb);
  return solve_sylvester(ops.A, ops.B, ops.Q);
}

namespace detail {

struct SsharpStep {
  DenseMatrix value;
  double nuclear_norm;
};

inline SsharpStep ssharp_step(const SolverState& st, const Problem& pb) {
  const double beta = st.duals.beta;
  const double tau = pb.lambda2() / beta;
  SvdResult d = svd(reshuffle_g(st.S) - st.duals.Y1 / beta);
  DenseVector s = d.sigma.unaryExpr([tau](double x) { return soft_threshold(x, tau); });
  return {d.U * s.asDiagonal() * d.V.transpose(), s.sum()};
}

}  // namespace detail

/// svt(g(S) - Y1 / beta, lambda2 / beta)
inline DenseMatrix update_Ssharp(const SolverState& st, const Problem& pb) {
  return detail::ssharp_step(st, pb).value;
}

/// shrink(C D + Y3 / beta, lambda1 / beta)
inline DenseMatrix update_E(const SolverState& st, const Problem& pb) {
  const double beta = st.duals.beta;
  return shrink(st.C * pb.D() + st.duals.Y3 / beta, pb.lambda1() / beta);
}

/// Operands of the C-update Sylvester equation A C + C B = Q:
///   A = S^T S + 1 1^T (+ kCoefficientShift I)
///   B = D D^T
///   Q = S^T S + S^T Y2 / beta + E D^T - Y3 D^T / beta + 1 1^T - 1 Y4 / beta
inline SylvesterOperands c_update_operands(const SolverState& st, const Problem& pb) {
  const double beta = st.duals.beta;
  const Index p = pb.points();
  const DenseMatrix sts = st.S.transpose() * st.S;
  SylvesterOperands ops;
  ops.A = sts.array() + 1.0;
  ops.A.diagonal().array() += kCoefficientShift;
  ops.B = pb.DDt();
  symmetrize(ops.A);
  symmetrize(ops.B);
  ops.Q = sts + st.S.transpose() * st.duals.Y2 / beta + st.E * pb.D().transpose() -
          st.duals.Y3 * pb.D().transpose() / beta;
  ops.Q.array() += 1.0;
  ops.Q -= DenseVector::Ones(p) * (st.duals.Y4 / beta);
  return ops;
}

/// C-update before the diagonal is cleared.
inline DenseMatrix update_C_unconstrained(const SolverState& st, const Problem& pb) {
  const SylvesterOperands ops = c_update_operands(st, pb);
  return solve_sylvester(ops.A, ops.B, ops.Q);
}

/// C-update: Sylvester solve, then diag(C) <- 0.
inline DenseMatrix update_C(const SolverState& st, const Problem& pb) {
  DenseMatrix c = update_C_unconstrained(st, pb);
  c.diagonal().setZero();
  return c;
}

inline Residuals constraint_residuals(const SolverState& st, const Problem& pb) {
  Residuals r;
  r.r1 = max_abs(st.Ssharp - reshuffle_g(st.S));
  r.r2 = max_abs(st.S - st.S * st.C);
  r.r3 = max_abs(st.C * pb.D() - st.E);
  r.r4 = (st.C.colwise().sum().array() - 1.0).abs().maxCoeff();
  return r;
}

/// Multiplier ascent on the four constraints, then beta <- min(beta_max, rho beta).
inline DualState update_duals(const SolverState& st, const Problem& pb, const SolverConfig& cfg) {
  const double beta = st.duals.beta;
  DualState next = st.duals;
  next.Y1 += beta * (st.Ssharp - reshuffle_g(st.S));
  next.Y2 += beta * (st.S - st.S * st.C);
  next.Y3 += beta * (st.C * pb.D() - st.E);
  next.Y4 += beta * (st.C.colwise().sum().array() - 1.0).matrix();
  next.beta = std::min(cfg.beta_max, cfg.rho * beta);
  return next;
}

/// 1/2 ||W - R S||_F^2 + lambda1 ||E||_1 + lambda2 ||S#||_*
inline double objective(const SolverState& st, const Problem& pb, double ssharp_nuclear) {
  return 0.5 * (pb.W() - pb.R() * st.S).squaredNorm() +
         pb.lambda1() * st.E.cwiseAbs().sum() + pb.lambda2() * ssharp_nuclear;
}

inline double objective(const SolverState& st, const Problem& pb) {
  return objective(st, pb, nuclear_norm(st.Ssharp));
}

/// Augmented Lagrangian at `st` with penalty st.duals.beta.
inline double augmented_lagrangian(const SolverState& st, const Problem& pb) {
  const double beta = st.duals.beta;
  const DualState& y = st.duals;
  const DenseMatrix c1 = st.Ssharp - reshuffle_g(st.S);
  const DenseMatrix c2 = st.S - st.S * st.C;
  const DenseMatrix c3 = st.C * pb.D() - st.E;
  const RowVector c4 = (st.C.colwise().sum().array() - 1.0).matrix();
  return objective(st, pb) + (y.Y1.cwiseProduct(c1)).sum() + 0.5 * beta * c1.squaredNorm() +
         (y.Y2.cwiseProduct(c2)).sum() + 0.5 * beta * c2.squaredNorm() +
         (y.Y3.cwiseProduct(c3)).sum() + 0.5 * beta * c3.squaredNorm() +
         (y.Y4.cwiseProduct(c4)).sum() + 0.5 * beta * c4.squaredNorm();
}

// ---------------------------------------------------------------------------

/// One sweep S -> S# -> E -> C -> multipliers. Fills `record` for the sweep.
inline void admm_sweep(SolverState& st, const Problem& pb, const SolverConfig& cfg,
                       TraceRecord& record) {
  st.S = update_S(st, pb);
  detail::SsharpStep ss = detail::ssharp_step(st, pb);
  st.Ssharp = std::move(ss.value);
  st.E = update_E(st, pb);
  st.C = update_C(st, pb);

  record.beta = st.duals.beta;
  record.residuals = constraint_residuals(st, pb);
  record.objective = objective(st, pb, ss.nuclear_norm);
  st.duals = update_duals(st, pb, cfg);
}

/// Runs ADMM from `init` until every constraint residual is <= epsilon or
/// max_iters sweeps have run. Running out of iterations is reported through
/// trace.converged, not an exception; the last iterate is returned.
inline SolveResult solve(const Problem& pb, const SolverConfig& cfg, SolverState init) {
  cfg.validate();
  SolveResult out;
  SolverState& st = init;
  out.trace.records.reserve(static_cast<std::size_t>(cfg.max_iters));
  for (int it = 1; it <= cfg.max_iters; ++it) {
    TraceRecord rec;
    rec.iteration = it;
    admm_sweep(st, pb, cfg, rec);
    out.trace.records.push_back(rec);
    if (rec.residuals.max() <= cfg.epsilon) {
      out.trace.converged = true;
      break;
    }
  }
  out.shape = ShapeState{st.S, reshuffle_g(st.S)};
  out.C = CoefficientMatrix(st.C);
  out.final_state = std::move(st);
  return out;
}

/// Full entry point: sparse mode when `grid` is empty.
inline SolveResult solve(const MeasurementMatrix& w, const CameraMotion& r,
                         const std::optional<NeighborMatrix>& grid, const SolverConfig& cfg,
                         const std::optional<DenseMatrix>& init_s = std::nullopt) {
  cfg.validate();
  const Problem pb = Problem::make(w, r, grid, cfg);
  return solve(pb, cfg, initial_state(pb, cfg, w, r, init_s));
}

}  // namespace mbnrsfm
