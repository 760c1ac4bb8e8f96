#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "mbnrsfm/synth.hpp"

using namespace mbnrsfm;

namespace {

int numerical_rank(const DenseMatrix& m) {
  Eigen::JacobiSVD<DenseMatrix> svd(m);
  const auto& s = svd.singularValues();
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > 1e-8 * s(0)) ++r;
  return r;
}

// Residual of x against the affine hull of the columns of y.
double affine_residual(const DenseMatrix& y, const DenseVector& x) {
  const DenseMatrix diff = y.rightCols(y.cols() - 1).colwise() - y.col(0);
  const DenseVector target = x - y.col(0);
  const DenseVector coef = diff.completeOrthogonalDecomposition().solve(target);
  return (diff * coef - target).norm();
}

DenseMatrix drop_column(const DenseMatrix& m, Index j) {
  DenseMatrix out(m.rows(), m.cols() - 1);
  out << m.leftCols(j), m.rightCols(m.cols() - j - 1);
  return out;
}

Eigen::Matrix3d full_rotation(const CameraBlock& b) {
  Eigen::Matrix3d r;
  r.row(0) = b.row(0);
  r.row(1) = b.row(1);
  r.row(2) = b.row(0).cross(b.row(1));
  return r;
}

SynthConfig rigid_config(CameraMode mode, std::uint64_t seed) {
  SynthConfig c;
  c.seed = seed;
  c.camera_mode = mode;
  c.bodies = {BodySpec{25, 1, {0.0, 0.0, 0.0}, 1.0, true}};
  return c;
}

}  // namespace

TEST(GenerateBody, RankBoundedByThreeTimesBasis) {
  for (int k = 1; k <= 4; ++k) {
    const BodySpec spec{40, k, {1.0, -2.0, 0.5}, 1.3, false};
    DenseMatrix s = generate_body(spec, 30, 100 + k);
    s.colwise() -= s.rowwise().mean();
    EXPECT_LE(numerical_rank(s), 3 * k) << "K_b = " << k;
  }
}

TEST(GenerateBody, RigidBodyReshuffledRankAtMostThree) {
  const DenseMatrix s = generate_body(BodySpec{20, 1, {0.0, 0.0, 0.0}, 1.0, true}, 25, 3);
  EXPECT_LE(numerical_rank(reshuffle_g(s)), 3);
  for (Index f = 1; f < 25; ++f) EXPECT_EQ(s.middleRows(3 * f, 3), s.middleRows(0, 3));
}

TEST(GenerateBody, DegenerateBasisRejected) {
  EXPECT_THROW(generate_body(BodySpec{3, 3, {0, 0, 0}, 1.0, false}, 10, 0), ValueError);
  EXPECT_THROW(generate_body(BodySpec{3, 0, {0, 0, 0}, 1.0, false}, 10, 0), ValueError);
}

TEST(GenerateBody, Deterministic) {
  const BodySpec spec{30, 2, {0, 0, 0}, 1.0, false};
  EXPECT_EQ(generate_body(spec, 30, 9), generate_body(spec, 30, 9));
  EXPECT_NE(generate_body(spec, 30, 9), generate_body(spec, 30, 10));
}

TEST(GenerateScene, NoiselessProjectionIsExact) {
  const SynthScene sc = generate_scene(SynthConfig::two_body(1));
  EXPECT_EQ(project(sc.R, sc.S_gt).data(), sc.W.data());
  EXPECT_EQ(sc.W.data(), sc.W_clean.data());
  EXPECT_EQ(sc.noise_std, 0.0);
  EXPECT_LE(sc.S_gt.rowwise().mean().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GenerateScene, LabelsFollowColumnOrder) {
  const SynthScene sc = generate_scene(SynthConfig::two_body(0));
  std::vector<int> expect(30, 0);
  expect.insert(expect.end(), 30, 1);
  EXPECT_EQ(sc.labels_gt.values(), expect);
  const SynthScene three = generate_scene(SynthConfig::three_body(0));
  EXPECT_EQ(three.labels_gt.cluster_count(), 3);
  EXPECT_EQ(three.labels_gt[19], 0);
  EXPECT_EQ(three.labels_gt[20], 1);
  EXPECT_EQ(three.labels_gt[40], 2);
}

TEST(GenerateScene, RelativeNoiseStd) {
  SynthConfig cfg = SynthConfig::two_body(2);
  cfg.frames = 100;  // 200 x 60 = 12000 samples
  cfg.noise_sigma = 0.01;
  cfg.noise_relative = true;
  const SynthScene sc = generate_scene(cfg);
  const DenseMatrix d = sc.W.data() - sc.W_clean.data();
  ASSERT_GE(d.size(), 10000);
  const double sigma = 0.01 * sc.W_clean.data().cwiseAbs().maxCoeff();
  EXPECT_DOUBLE_EQ(sc.noise_std, sigma);
  const double mean = d.mean();
  const double sd = std::sqrt((d.array() - mean).square().sum() / static_cast<double>(d.size() - 1));
  EXPECT_NEAR(sd, sigma, 0.05 * sigma);
}

TEST(GenerateScene, DeterministicForSameConfig) {
  SynthConfig cfg = SynthConfig::three_body(5);
  cfg.noise_sigma = 0.02;
  const SynthScene a = generate_scene(cfg), b = generate_scene(cfg);
  EXPECT_EQ(a.W.data(), b.W.data());
  EXPECT_EQ(a.R.stacked(), b.R.stacked());
  EXPECT_EQ(a.S_gt, b.S_gt);
  EXPECT_EQ(a.labels_gt, b.labels_gt);
}

TEST(GenerateScene, InvalidConfigsRejected) {
  SynthConfig cfg = SynthConfig::two_body();
  cfg.noise_sigma = -1.0;
  EXPECT_THROW(generate_scene(cfg), ValueError);
  cfg = SynthConfig::two_body();
  cfg.bodies.clear();
  EXPECT_THROW(generate_scene(cfg), ValueError);
  cfg = SynthConfig::two_body();
  cfg.bodies = {BodySpec{1, 1, {0, 0, 0}, 1.0, true}};
  EXPECT_THROW(generate_scene(cfg), ValueError);
}

TEST(GenerateScene, CameraStepsBounded) {
  const SynthScene sc = generate_scene(SynthConfig::two_body(3));
  for (Index f = 1; f < sc.R.frames(); ++f) {
    const Eigen::Matrix3d rel = full_rotation(sc.R.block(f)) * full_rotation(sc.R.block(f - 1)).transpose();
    const double angle = std::acos(std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0));
    EXPECT_LE(angle * 180.0 / std::numbers::pi, 2.0 + 1e-9) << "frame " << f;
    EXPECT_GT(angle, 0.0);
  }
}

TEST(GenerateScene, TrajectoriesSelfExpressiveWithinBodies) {
  for (std::uint64_t seed : {0u, 1u}) {
    for (const SynthConfig& cfg : {SynthConfig::two_body(seed), SynthConfig::three_body(seed)}) {
      const SynthScene sc = generate_scene(cfg);
      Index start = 0;
      for (std::size_t b = 0; b < cfg.bodies.size(); ++b) {
        const Index n = cfg.bodies[b].points;
        const DenseMatrix own = sc.S_gt.middleCols(start, n);
        DenseMatrix others(sc.S_gt.rows(), sc.S_gt.cols() - n);
        others << sc.S_gt.leftCols(start), sc.S_gt.rightCols(sc.S_gt.cols() - start - n);
        for (Index j = 0; j < n; ++j) {
          const DenseVector x = own.col(j);
          const double within = affine_residual(drop_column(own, j), x);
          const double cross = affine_residual(others, x);
          EXPECT_LE(within, 1e-6 * x.norm()) << "body " << b << " point " << j;
          EXPECT_GE(cross, 10.0 * std::max(within, 1e-6 * x.norm())) << "body " << b << " point " << j;
        }
        start += n;
      }
    }
  }
}

TEST(RigidRotationInit, OrthonormalBlocksOnRigidScene) {
  const SynthScene sc = generate_scene(rigid_config(CameraMode::smooth_random, 4));
  const CameraMotion r = rigid_rotation_init(sc.W);
  for (Index f = 0; f < r.frames(); ++f) {
    EXPECT_LE((r.block(f) * r.block(f).transpose() - Eigen::Matrix2d::Identity()).norm(), 1e-6);
  }
}

TEST(RigidRotationInit, ReprojectsRigidSmoothRandomScene) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const SynthScene sc = generate_scene(rigid_config(CameraMode::smooth_random, seed));
    const RigidFactorization fac = rigid_factorization(sc.W);
    DenseMatrix s(3 * sc.W.frames(), sc.W.points());
    for (Index f = 0; f < sc.W.frames(); ++f) s.middleRows(3 * f, 3) = fac.shape;
    const double err = (sc.W.data() - project(fac.R, s).data()).norm() / sc.W.data().norm();
    EXPECT_LE(err, 1e-3) << "seed " << seed;
  }
}

TEST(RigidRotationInit, DegenerateTracksRejected) {
  EXPECT_THROW(rigid_rotation_init(MeasurementMatrix(DenseMatrix::Zero(10, 6))), NumericalError);
  // A static shape seen through a fixed identity camera has tracks of rank 2,
  // so the rank-3 factorization is refused.
  const SynthScene sc = generate_scene(rigid_config(CameraMode::identity, 5));
  EXPECT_THROW(rigid_rotation_init(sc.W), NumericalError);
}
