#pragma once

// Dense kernels shared by the solver: SVD, singular value thresholding,
// entrywise shrinkage and a Bartels-Stewart Sylvester solver.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <string_view>
#include <vector>

#include "mbnrsfm/error.hpp"

namespace mbnrsfm {

using DenseMatrix = Eigen::MatrixXd;
using DenseVector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline bool all_finite(const Eigen::Ref<const DenseMatrix>& m) {
  return m.allFinite();
}

inline void require_finite(const Eigen::Ref<const DenseMatrix>& m,
                           std::string_view what) {
  if (!m.allFinite()) {
    throw NumericalError(std::string(what) + ": non-finite entry");
  }
}

// Largest absolute entry; 0 for an empty matrix.
inline double max_abs(const Eigen::Ref<const DenseMatrix>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// m <- (m + m^T) / 2, making rounding-level asymmetry exact.
inline void symmetrize(DenseMatrix& m) {
  m = (0.5 * (m + m.transpose())).eval();
}

/// sign(x) * max(|x| - tau, 0)
inline double soft_threshold(double x, double tau) {
  const double mag = std::abs(x) - tau;
  if (mag <= 0.0) return 0.0;
  return x < 0.0 ? -mag : mag;
}

/// Entrywise soft_threshold.
inline DenseMatrix shrink(const Eigen::Ref<const DenseMatrix>& m, double tau) {
  if (tau < 0.0) throw ValueError("shrink: negative threshold");
  return m.unaryExpr([tau](double x) { return soft_threshold(x, tau); });
}

struct SvdResult {
  DenseMatrix U;      // rows x r, orthonormal columns
  DenseVector sigma;  // r = min(rows, cols), nonincreasing
  DenseMatrix V;      // cols x r, orthonormal columns
};

/// Thin SVD, M = U diag(sigma) V^T. Two-sided Jacobi (with QR
/// preconditioning for rectangular inputs) keeps the reconstruction at
/// working precision.
inline SvdResult svd(const Eigen::Ref<const DenseMatrix>& m) {
  require_finite(m, "svd");
  if (m.size() == 0) {
    return {DenseMatrix(m.rows(), 0), DenseVector(0), DenseMatrix(m.cols(), 0)};
  }
  Eigen::JacobiSVD<DenseMatrix> jac(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (jac.info() != Eigen::Success) {
    throw NumericalError("svd: Jacobi iteration did not converge");
  }
  SvdResult out{jac.matrixU(), jac.singularValues(), jac.matrixV()};
  if (!out.U.allFinite() || !out.V.allFinite() || !out.sigma.allFinite()) {
    throw NumericalError("svd: non-finite factor");
  }
  return out;
}

/// Proximal operator of tau * nuclear norm: U diag(shrink(sigma)) V^T.
inline DenseMatrix svt(const Eigen::Ref<const DenseMatrix>& m, double tau) {
  if (tau < 0.0) throw ValueError("svt: negative threshold");
  SvdResult d = svd(m);
  DenseVector s = d.sigma.unaryExpr([tau](double x) { return soft_threshold(x, tau); });
  return d.U * s.asDiagonal() * d.V.transpose();
}

inline double nuclear_norm(const Eigen::Ref<const DenseMatrix>& m) {
  return svd(m).sigma.sum();
}

namespace detail {

// Diagonal block boundaries of a quasi-upper-triangular Schur factor:
// starts[b] .. starts[b+1]-1 is block b (size 1 or 2).
inline std::vector<Eigen::Index> schur_blocks(const DenseMatrix& t) {
  std::vector<Eigen::Index> starts;
  const Eigen::Index n = t.rows();
  Eigen::Index i = 0;
  while (i < n) {
    starts.push_back(i);
    i += (i + 1 < n && t(i + 1, i) != 0.0) ? 2 : 1;
  }
  starts.push_back(n);
  return starts;
}

inline std::vector<std::complex<double>> block_eigenvalues(
    const DenseMatrix& t, const std::vector<Eigen::Index>& starts) {
  std::vector<std::complex<double>> ev;
  ev.reserve(static_cast<std::size_t>(t.rows()));
  for (std::size_t b = 0; b + 1 < starts.size(); ++b) {
    const Eigen::Index i = starts[b];
    if (starts[b + 1] - i == 1) {
      ev.emplace_back(t(i, i), 0.0);
    } else {
      const double a = t(i, i), bb = t(i, i + 1), c = t(i + 1, i), d = t(i + 1, i + 1);
      const std::complex<double> half_tr = 0.5 * (a + d);
      const std::complex<double> disc =
          std::sqrt(std::complex<double>(0.25 * (a - d) * (a - d) + bb * c, 0.0));
      ev.push_back(half_tr + disc);
      ev.push_back(half_tr - disc);
    }
  }
  return ev;
}

// Solves T Y + Y S = G for blocks of size at most 2x2 through the
// Kronecker form (I (x) T + S^T (x) I) vec(Y) = vec(G).
inline DenseMatrix solve_small_sylvester(const DenseMatrix& t, const DenseMatrix& s,
                                         const DenseMatrix& g) {
  const Eigen::Index p = t.rows(), q = s.rows();
  DenseMatrix k = DenseMatrix::Zero(p * q, p * q);
  for (Eigen::Index j = 0; j < q; ++j) {
    k.block(j * p, j * p, p, p) += t;
    for (Eigen::Index l = 0; l < q; ++l) {
      k.block(j * p, l * p, p, p).diagonal().array() += s(l, j);
    }
  }
  DenseVector rhs = Eigen::Map<const DenseVector>(g.data(), p * q);
  DenseVector y = k.fullPivLu().solve(rhs);
  return Eigen::Map<const DenseMatrix>(y.data(), p, q);
}

struct SchurForm {
  DenseMatrix T;  // quasi-upper-triangular
  DenseMatrix U;  // orthogonal, M = U T U^T
};

// An exactly symmetric input gets its eigendecomposition (diagonal T).
// RealSchur stalls on symmetric matrices with many clustered tiny
// eigenvalues, such as S^T S + 1 1^T + 1e-10 I.
inline SchurForm schur_form(const Eigen::Ref<const DenseMatrix>& m) {
  const Eigen::Index n = m.rows();
  if (m == m.transpose()) {
    Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(m);
    if (eig.info() != Eigen::Success) {
      throw NumericalError("solve_sylvester: symmetric eigensolver did not converge");
    }
    return {eig.eigenvalues().asDiagonal(), eig.eigenvectors()};
  }
  Eigen::RealSchur<DenseMatrix> rs(n);
  rs.setMaxIterations(100 * n);
  rs.compute(m);
  if (rs.info() != Eigen::Success) {
    throw NumericalError("solve_sylvester: Schur decomposition did not converge");
  }
  return {rs.matrixT(), rs.matrixU()};
}

}  // namespace detail

/// Solves A X + X B = Q by Bartels-Stewart: real Schur forms A = U T U^T and
/// B = V S V^T, then block substitution on T Y + Y S = U^T Q V.
///
/// Throws NumericalError when some eigenvalue pair satisfies
/// |lambda_A + lambda_B| <= 1e-12 (the pencil is singular).
inline DenseMatrix solve_sylvester(const Eigen::Ref<const DenseMatrix>& a,
                                   const Eigen::Ref<const DenseMatrix>& b,
                                   const Eigen::Ref<const DenseMatrix>& q) {
  const Eigen::Index n = a.rows(), m = b.rows();
  if (a.cols() != n || b.cols() != m) {
    throw DimensionError("solve_sylvester: A and B must be square");
  }
  if (q.rows() != n || q.cols() != m) {
    throw DimensionError("solve_sylvester: Q must be " + std::to_string(n) + "x" +
                         std::to_string(m));
  }
  require_finite(a, "solve_sylvester(A)");
  require_finite(b, "solve_sylvester(B)");
  require_finite(q, "solve_sylvester(Q)");
  if (n == 0 || m == 0) return DenseMatrix(n, m);

  const detail::SchurForm sa = detail::schur_form(a);
  const detail::SchurForm sb = detail::schur_form(b);
  const DenseMatrix& t = sa.T;
  const DenseMatrix& ua = sa.U;
  const DenseMatrix& s = sb.T;
  const DenseMatrix& vb = sb.U;

  const auto row_blocks = detail::schur_blocks(t);
  const auto col_blocks = detail::schur_blocks(s);

  const auto ea = detail::block_eigenvalues(t, row_blocks);
  const auto eb = detail::block_eigenvalues(s, col_blocks);
  for (std::size_t i = 0; i < ea.size(); ++i) {
    for (std::size_t j = 0; j < eb.size(); ++j) {
      if (std::abs(ea[i] + eb[j]) <= 1e-12) {
        std::ostringstream msg;
        msg << "solve_sylvester: singular pencil, eigenvalue " << ea[i] << " of A and "
            << eb[j] << " of B sum to " << (ea[i] + eb[j]);
        throw NumericalError(msg.str());
      }
    }
  }

  DenseMatrix y = ua.transpose() * q * vb;  // overwritten column block by block
  for (std::size_t cb = 0; cb + 1 < col_blocks.size(); ++cb) {
    const Eigen::Index j0 = col_blocks[cb];
    const Eigen::Index qj = col_blocks[cb + 1] - j0;
    if (j0 > 0) {
      y.middleCols(j0, qj).noalias() -= y.leftCols(j0) * s.block(0, j0, j0, qj);
    }
    const DenseMatrix s_jj = s.block(j0, j0, qj, qj);
    for (std::size_t rb = row_blocks.size() - 1; rb-- > 0;) {
      const Eigen::Index i0 = row_blocks[rb];
      const Eigen::Index pi = row_blocks[rb + 1] - i0;
      const Eigen::Index tail = n - (i0 + pi);
      DenseMatrix g = y.block(i0, j0, pi, qj);
      if (tail > 0) {
        g.noalias() -= t.block(i0, i0 + pi, pi, tail) * y.block(i0 + pi, j0, tail, qj);
      }
      y.block(i0, j0, pi, qj) = detail::solve_small_sylvester(t.block(i0, i0, pi, pi), s_jj, g);
    }
  }

  DenseMatrix x = ua * y * vb.transpose();
  require_finite(x, "solve_sylvester(X)");
  return x;
}

}  // namespace mbnrsfm
