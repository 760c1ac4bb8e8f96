#pragma once

// Scene data: tracks W (2F x P), camera rows R (F blocks of 2x3), shapes S
// (3F x P) and their reshuffled form S# (F x 3P), self-expression C (P x P),
// the 4-neighbour difference operator D and segment labels.

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mbnrsfm/error.hpp"
#include "mbnrsfm/linalg.hpp"

namespace mbnrsfm {

using Index = Eigen::Index;
using CameraBlock = Eigen::Matrix<double, 2, 3>;

inline std::string dims(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

/// Stacked image tracks: rows 2f, 2f+1 hold u and v of frame f (0-based).
class MeasurementMatrix {
 public:
  MeasurementMatrix() = default;
  explicit MeasurementMatrix(DenseMatrix data) : data_(std::move(data)) {
    if (data_.rows() == 0 || data_.rows() % 2 != 0 || data_.cols() == 0) {
      throw DimensionError("MeasurementMatrix: expected 2F x P with F, P >= 1, got " +
                           dims(data_.rows(), data_.cols()));
    }
    require_finite(data_, "MeasurementMatrix");
  }

  Index frames() const { return data_.rows() / 2; }
  Index points() const { return data_.cols(); }
  const DenseMatrix& data() const { return data_; }

 private:
  DenseMatrix data_;
};

/// Per-frame orthographic cameras: the first two rows of each frame's rotation.
class CameraMotion {
 public:
  static constexpr double kOrthonormalTol = 1e-8;

  CameraMotion() = default;
  explicit CameraMotion(std::vector<CameraBlock> blocks) : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw DimensionError("CameraMotion: no frames");
    for (std::size_t f = 0; f < blocks_.size(); ++f) {
      const CameraBlock& r = blocks_[f];
      if (!r.allFinite()) {
        throw NumericalError("CameraMotion: non-finite block at frame " + std::to_string(f));
      }
      const double dev = (r * r.transpose() - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff();
      if (dev > kOrthonormalTol) {
        throw ValueError("CameraMotion: frame " + std::to_string(f) +
                         " rows are not orthonormal (deviation " + std::to_string(dev) + ")");
      }
    }
  }

  /// From the 2F x 3 stacking used by the rotation file format.
  static CameraMotion from_stacked(const DenseMatrix& stacked) {
    if (stacked.cols() != 3 || stacked.rows() == 0 || stacked.rows() % 2 != 0) {
      throw DimensionError("CameraMotion: stacked rotations must be 2F x 3, got " +
                           dims(stacked.rows(), stacked.cols()));
    }
    std::vector<CameraBlock> blocks(static_cast<std::size_t>(stacked.rows() / 2));
    for (std::size_t f = 0; f < blocks.size(); ++f) {
      blocks[f] = stacked.block<2, 3>(2 * static_cast<Index>(f), 0);
    }
    return CameraMotion(std::move(blocks));
  }

  /// Every frame sees the scene along -z: R_f = [[1,0,0],[0,1,0]].
  static CameraMotion identity(Index frames) {
    CameraBlock r = CameraBlock::Zero();
    r(0, 0) = 1.0;
    r(1, 1) = 1.0;
    return CameraMotion(std::vector<CameraBlock>(static_cast<std::size_t>(frames), r));
  }

  Index frames() const { return static_cast<Index>(blocks_.size()); }
  const CameraBlock& block(Index f) const { return blocks_[static_cast<std::size_t>(f)]; }
  const std::vector<CameraBlock>& blocks() const { return blocks_; }

  DenseMatrix stacked() const {
    DenseMatrix out(2 * frames(), 3);
    for (Index f = 0; f < frames(); ++f) out.block<2, 3>(2 * f, 0) = block(f);
    return out;
  }

  /// R = blkdiag(R_1, ..., R_F), 2F x 3F.
  DenseMatrix block_diagonal() const {
    DenseMatrix out = DenseMatrix::Zero(2 * frames(), 3 * frames());
    for (Index f = 0; f < frames(); ++f) out.block<2, 3>(2 * f, 3 * f) = block(f);
    return out;
  }

 private:
  std::vector<CameraBlock> blocks_;
};

/// Shape in both layouts; the solver publishes Ssharp == reshuffle_g(S).
struct ShapeState {
  DenseMatrix S;       // 3F x P
  DenseMatrix Ssharp;  // F x 3P
};

/// Self-expression coefficients with an exactly zero diagonal.
class CoefficientMatrix {
 public:
  CoefficientMatrix() = default;
  explicit CoefficientMatrix(DenseMatrix c) : c_(std::move(c)) {
    if (c_.rows() != c_.cols()) {
      throw DimensionError("CoefficientMatrix: must be square, got " + dims(c_.rows(), c_.cols()));
    }
    require_finite(c_, "CoefficientMatrix");
    for (Index i = 0; i < c_.rows(); ++i) {
      if (c_(i, i) != 0.0) {
        throw ValueError("CoefficientMatrix: nonzero diagonal at " + std::to_string(i));
      }
    }
  }

  Index points() const { return c_.rows(); }
  const DenseMatrix& values() const { return c_; }

 private:
  DenseMatrix c_;
};

/// 4-neighbour difference operator on a row-major pixel grid. Column 4p+d
/// (d = up, left, right, down) holds +1 at p and -1 at the neighbour, or is
/// all zero when the neighbour falls outside the grid.
struct NeighborMatrix {
  Index grid_height = 0;
  Index grid_width = 0;
  DenseMatrix D;  // P x 4P

  Index points() const { return D.rows(); }
};

class SegmentLabels {
 public:
  SegmentLabels() = default;
  explicit SegmentLabels(std::vector<int> labels) : labels_(std::move(labels)) {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] < 0) {
        throw ValueError("SegmentLabels: negative id at point " + std::to_string(i));
      }
    }
  }

  std::size_t size() const { return labels_.size(); }
  int operator[](std::size_t i) const { return labels_[i]; }
  const std::vector<int>& values() const { return labels_; }

  /// max id + 1 (0 when empty).
  int cluster_count() const {
    int k = 0;
    for (int l : labels_) k = std::max(k, l + 1);
    return k;
  }

  friend bool operator==(const SegmentLabels&, const SegmentLabels&) = default;

 private:
  std::vector<int> labels_;
};

// ---------------------------------------------------------------------------
// Structural operators

/// S (3F x P) -> S# (F x 3P); row f is [x_f | y_f | z_f].
inline DenseMatrix reshuffle_g(const Eigen::Ref<const DenseMatrix>& s) {
  if (s.rows() % 3 != 0) {
    throw DimensionError("reshuffle_g: row count must be a multiple of 3, got " +
                         dims(s.rows(), s.cols()));
  }
  const Index frames = s.rows() / 3, p = s.cols();
  DenseMatrix out(frames, 3 * p);
  for (Index f = 0; f < frames; ++f) {
    for (Index axis = 0; axis < 3; ++axis) {
      out.block(f, axis * p, 1, p) = s.row(3 * f + axis);
    }
  }
  return out;
}

/// Inverse of reshuffle_g: S# (F x 3P) -> S (3F x P).
inline DenseMatrix reshuffle_g_inv(const Eigen::Ref<const DenseMatrix>& ssharp) {
  if (ssharp.cols() % 3 != 0) {
    throw DimensionError("reshuffle_g_inv: column count must be a multiple of 3, got " +
                         dims(ssharp.rows(), ssharp.cols()));
  }
  const Index frames = ssharp.rows(), p = ssharp.cols() / 3;
  DenseMatrix out(3 * frames, p);
  for (Index f = 0; f < frames; ++f) {
    for (Index axis = 0; axis < 3; ++axis) {
      out.row(3 * f + axis) = ssharp.block(f, axis * p, 1, p);
    }
  }
  return out;
}

/// W = R S, evaluated frame by frame.
inline MeasurementMatrix project(const CameraMotion& r, const Eigen::Ref<const DenseMatrix>& s) {
  if (s.rows() != 3 * r.frames()) {
    throw DimensionError("project: camera has " + std::to_string(r.frames()) +
                         " frames but shape is " + dims(s.rows(), s.cols()));
  }
  DenseMatrix w(2 * r.frames(), s.cols());
  for (Index f = 0; f < r.frames(); ++f) {
    w.middleRows(2 * f, 2).noalias() = r.block(f) * s.middleRows(3 * f, 3);
  }
  return MeasurementMatrix(std::move(w));
}

inline NeighborMatrix build_neighbor_matrix(Index grid_height, Index grid_width) {
  if (grid_height <= 0 || grid_width <= 0) {
    throw DimensionError("build_neighbor_matrix: empty grid " + dims(grid_height, grid_width));
  }
  const Index p = grid_height * grid_width;
  NeighborMatrix out{grid_height, grid_width, DenseMatrix::Zero(p, 4 * p)};
  constexpr int kDr[4] = {-1, 0, 0, 1};  // up, left, right, down
  constexpr int kDc[4] = {0, -1, 1, 0};
  for (Index r = 0; r < grid_height; ++r) {
    for (Index c = 0; c < grid_width; ++c) {
      const Index centre = r * grid_width + c;
      for (int d = 0; d < 4; ++d) {
        const Index nr = r + kDr[d], nc = c + kDc[d];
        if (nr < 0 || nr >= grid_height || nc < 0 || nc >= grid_width) continue;
        const Index col = 4 * centre + d;
        out.D(centre, col) = 1.0;
        out.D(nr * grid_width + nc, col) = -1.0;
      }
    }
  }
  return out;
}

/// [I | D], P x 5P.
inline DenseMatrix extend_with_identity(const NeighborMatrix& d) {
  const Index p = d.points();
  if (d.D.cols() != 4 * p) {
    throw DimensionError("extend_with_identity: D must be P x 4P, got " + dims(p, d.D.cols()));
  }
  DenseMatrix out(p, 5 * p);
  out.leftCols(p).setIdentity();
  out.rightCols(4 * p) = d.D;
  return out;
}

/// Extension used without a spatial term: the identity alone, P x P.
inline DenseMatrix identity_extension(Index points) {
  return DenseMatrix::Identity(points, points);
}

}  // namespace mbnrsfm
