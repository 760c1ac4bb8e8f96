#pragma once

// Synthetic multi-body scenes whose trajectories lie exactly in one
// low-dimensional affine subspace per body, plus a rigid factorization
// initializer for camera rows.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mbnrsfm/error.hpp"
#include "mbnrsfm/linalg.hpp"
#include "mbnrsfm/scene.hpp"

namespace mbnrsfm {

struct BodySpec {
  Index points = 30;
  int basis_rank = 2;  // K_b: number of 3D basis shapes
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  double scale = 1.0;
  bool rigid = false;  // constant basis coefficients: a static shape
};

enum class CameraMode { identity, smooth_random };

struct SynthConfig {
  Index frames = 30;
  std::vector<BodySpec> bodies;
  // Std of the Gaussian noise added to W; a fraction of max|W| when
  // noise_relative is set.
  double noise_sigma = 0.0;
  bool noise_relative = false;
  CameraMode camera_mode = CameraMode::smooth_random;
  double max_step_deg = 2.0;  // geodesic rotation step bound (smooth_random)
  std::uint64_t seed = 0;

  Index total_points() const {
    Index p = 0;
    for (const auto& b : bodies) p += b.points;
    return p;
  }

  void validate() const {
    if (frames < 1) throw ValueError("SynthConfig: frames must be >= 1");
    if (bodies.empty()) throw ValueError("SynthConfig: no bodies");
    for (const auto& b : bodies) {
      if (b.basis_rank < 1) throw ValueError("SynthConfig: basis_rank must be >= 1");
      if (b.points < 1) throw ValueError("SynthConfig: body without points");
      if (!(b.scale > 0.0)) throw ValueError("SynthConfig: scale must be positive");
    }
    if (total_points() < 2) throw ValueError("SynthConfig: need at least 2 points");
    if (!(noise_sigma >= 0.0)) throw ValueError("SynthConfig: noise_sigma must be >= 0");
    if (!(max_step_deg >= 0.0)) throw ValueError("SynthConfig: max_step_deg must be >= 0");
  }

  /// F = 30, two deforming bodies of 30 points with K_b = 2.
  static SynthConfig two_body(std::uint64_t seed = 0) {
    SynthConfig c;
    c.seed = seed;
    c.bodies = {BodySpec{30, 2, {-2.0, 0.0, 0.0}, 1.0, false},
                BodySpec{30, 2, {2.0, 0.0, 0.0}, 1.5, false}};
    return c;
  }

  /// F = 30, three deforming bodies of 20 points with K_b = 2.
  static SynthConfig three_body(std::uint64_t seed = 0) {
    SynthConfig c;
    c.seed = seed;
    c.bodies = {BodySpec{20, 2, {-2.0, 0.0, 0.0}, 1.0, false},
                BodySpec{20, 2, {2.0, 0.0, 0.0}, 1.5, false},
                BodySpec{20, 2, {0.0, 2.0, 0.0}, 1.2, false}};
    return c;
  }
};

struct SynthScene {
  MeasurementMatrix W;        // noisy tracks
  MeasurementMatrix W_clean;  // R * S_gt
  CameraMotion R;
  DenseMatrix S_gt;  // 3F x P, zero mean per row
  SegmentLabels labels_gt;
  double noise_std = 0.0;  // absolute std actually applied
};

/// S_b(f) = scale * (sum_i c_i(f) B_i + centroid) with random 3 x points basis
/// shapes B_i and cosine-series curves c_i(f) = sum_{m <= K+1} a_m cos(pi m t + phi_m),
/// t = f / (F - 1). Every trajectory column lies in the affine subspace
/// centroid + span{c_i (x) e_axis}, of dimension <= 3 K_b.
inline DenseMatrix generate_body(const BodySpec& spec, Index frames, std::uint64_t seed) {
  if (spec.basis_rank < 1) throw ValueError("generate_body: basis_rank must be >= 1");
  if (spec.basis_rank >= spec.points) {
    throw ValueError("generate_body: basis_rank " + std::to_string(spec.basis_rank) +
                     " must be below the point count " + std::to_string(spec.points));
  }
  if (frames < 1) throw ValueError("generate_body: frames must be >= 1");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const int k = spec.basis_rank;

  std::vector<DenseMatrix> basis(static_cast<std::size_t>(k));
  for (auto& b : basis) {
    b.resize(3, spec.points);
    for (Index j = 0; j < b.size(); ++j) b.data()[j] = normal(rng);
  }

  DenseMatrix curves(k, frames);
  const double denom = frames > 1 ? static_cast<double>(frames - 1) : 1.0;
  for (int i = 0; i < k; ++i) {
    if (spec.rigid) {
      curves.row(i).setConstant(normal(rng));
      continue;
    }
    curves.row(i).setZero();
    for (int m = 0; m <= k + 1; ++m) {
      const double amp = normal(rng);
      const double phi = phase(rng);
      for (Index f = 0; f < frames; ++f) {
        const double t = static_cast<double>(f) / denom;
        curves(i, f) += amp * std::cos(std::numbers::pi * m * t + phi);
      }
    }
  }

  DenseMatrix s(3 * frames, spec.points);
  for (Index f = 0; f < frames; ++f) {
    DenseMatrix frame = spec.centroid.replicate(1, spec.points);
    for (int i = 0; i < k; ++i) frame += curves(i, f) * basis[static_cast<std::size_t>(i)];
    s.middleRows(3 * f, 3) = spec.scale * frame;
  }
  return s;
}

/// Camera rows for every frame. smooth_random starts from a uniformly random
/// rotation and applies per-frame steps of angle in [0.75, 1] * max_step_deg
/// about a jittered fixed axis.
inline CameraMotion generate_camera(CameraMode mode, Index frames, double max_step_deg,
                                    std::uint64_t seed) {
  if (mode == CameraMode::identity) return CameraMotion::identity(frames);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> frac(0.75, 1.0);

  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  Eigen::Matrix3d rot = q.toRotationMatrix();
  Eigen::Vector3d axis(normal(rng), normal(rng), normal(rng));
  axis.normalize();
  const double max_step = max_step_deg * std::numbers::pi / 180.0;

  std::vector<CameraBlock> blocks;
  blocks.reserve(static_cast<std::size_t>(frames));
  for (Index f = 0; f < frames; ++f) {
    if (f > 0) {
      Eigen::Vector3d a = axis + 0.2 * Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
      a.normalize();
      const double angle = max_step * frac(rng);
      rot = Eigen::AngleAxisd(angle, a).toRotationMatrix() * rot;
    }
    blocks.push_back(rot.topRows<2>());
  }
  return CameraMotion(std::move(blocks));
}

/// Bodies side by side (labels in column order), per-row zero mean applied
/// to S_gt, W = R S_gt plus i.i.d. Gaussian noise.
inline SynthScene generate_scene(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 master(cfg.seed);

  DenseMatrix s(3 * cfg.frames, cfg.total_points());
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(cfg.total_points()));
  Index col = 0;
  for (std::size_t b = 0; b < cfg.bodies.size(); ++b) {
    const BodySpec& spec = cfg.bodies[b];
    s.middleCols(col, spec.points) = generate_body(spec, cfg.frames, master());
    labels.insert(labels.end(), static_cast<std::size_t>(spec.points), static_cast<int>(b));
    col += spec.points;
  }
  s.colwise() -= s.rowwise().mean();

  const std::uint64_t camera_seed = master();
  const std::uint64_t noise_seed = master();
  CameraMotion r = generate_camera(cfg.camera_mode, cfg.frames, cfg.max_step_deg, camera_seed);
  MeasurementMatrix clean = project(r, s);

  const double sigma = cfg.noise_relative ? cfg.noise_sigma * max_abs(clean.data()) : cfg.noise_sigma;
  DenseMatrix w = clean.data();
  if (sigma > 0.0) {
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (Index j = 0; j < w.cols(); ++j) {
      for (Index i = 0; i < w.rows(); ++i) w(i, j) += noise(rng);
    }
  }
  return SynthScene{MeasurementMatrix(std::move(w)), std::move(clean), std::move(r), std::move(s),
                    SegmentLabels(std::move(labels)), sigma};
}

// ---------------------------------------------------------------------------

struct RigidFactorization {
  CameraMotion R;     // first frame aligned to [[1,0,0],[0,1,0]]
  DenseMatrix shape;  // 3 x P static shape in the same frame
};

/// Rank-3 factorization W ~ M S with the metric upgrade M <- M G chosen so
/// every frame's two rows are orthonormal (least squares over Q = G G^T),
/// then each 2x3 block snapped to the nearest row-orthonormal matrix. W
/// should be zero-mean per row.
inline RigidFactorization rigid_factorization(const MeasurementMatrix& w) {
  const SvdResult d = svd(w.data());
  if (d.sigma.size() < 3 || !(d.sigma(0) > 0.0) || d.sigma(2) <= 1e-10 * d.sigma(0)) {
    throw NumericalError("rigid_rotation_init: tracks have rank below 3 (degenerate motion)");
  }
  const Eigen::Vector3d root = d.sigma.head<3>().cwiseSqrt();
  const DenseMatrix m_hat = d.U.leftCols(3) * root.asDiagonal();
  const DenseMatrix s_hat = root.asDiagonal() * d.V.leftCols(3).transpose();

  const Index frames = w.frames();
  auto quad_row = [](const Eigen::RowVector3d& x, const Eigen::RowVector3d& y) {
    Eigen::Matrix<double, 1, 6> row;
    row << x(0) * y(0), x(0) * y(1) + x(1) * y(0), x(0) * y(2) + x(2) * y(0), x(1) * y(1),
        x(1) * y(2) + x(2) * y(1), x(2) * y(2);
    return row;
  };
  DenseMatrix lhs(3 * frames, 6);
  DenseVector rhs(3 * frames);
  for (Index f = 0; f < frames; ++f) {
    const Eigen::RowVector3d a = m_hat.row(2 * f);
    const Eigen::RowVector3d b = m_hat.row(2 * f + 1);
    lhs.row(3 * f) = quad_row(a, a);
    lhs.row(3 * f + 1) = quad_row(b, b);
    lhs.row(3 * f + 2) = quad_row(a, b);
    rhs.segment<3>(3 * f) << 1.0, 1.0, 0.0;
  }
  const DenseVector qv = lhs.colPivHouseholderQr().solve(rhs);
  Eigen::Matrix3d q;
  q << qv(0), qv(1), qv(2), qv(1), qv(3), qv(4), qv(2), qv(4), qv(5);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eq(q);
  const Eigen::Vector3d lam = eq.eigenvalues();
  if (!(lam.maxCoeff() > 0.0)) {
    throw NumericalError("rigid_rotation_init: metric upgrade is not positive definite");
  }
  const Eigen::Vector3d clipped = lam.cwiseMax(1e-12 * lam.maxCoeff());
  const Eigen::Matrix3d g = eq.eigenvectors() * clipped.cwiseSqrt().asDiagonal();
  const Eigen::Matrix3d g_inv = clipped.cwiseSqrt().cwiseInverse().asDiagonal() *
                                eq.eigenvectors().transpose();

  const DenseMatrix m = m_hat * g;
  std::vector<CameraBlock> blocks(static_cast<std::size_t>(frames));
  for (Index f = 0; f < frames; ++f) {
    const DenseMatrix mf = m.middleRows(2 * f, 2);
    Eigen::JacobiSVD<DenseMatrix> bs(mf, Eigen::ComputeThinU | Eigen::ComputeThinV);
    blocks[static_cast<std::size_t>(f)] = bs.matrixU() * bs.matrixV().transpose();
  }

  Eigen::Matrix3d align;
  align.row(0) = blocks[0].row(0);
  align.row(1) = blocks[0].row(1);
  align.row(2) = blocks[0].row(0).cross(blocks[0].row(1));
  for (auto& b : blocks) b = (b * align.transpose()).eval();

  return RigidFactorization{CameraMotion(std::move(blocks)), align * g_inv * s_hat};
}

inline CameraMotion rigid_rotation_init(const MeasurementMatrix& w) {
  return rigid_factorization(w).R;
}

}  // namespace mbnrsfm
