#pragma once

// Evaluation metrics: relative 3D error, segmentation error under the best
// label matching, and reprojection error.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mbnrsfm/error.hpp"
#include "mbnrsfm/linalg.hpp"
#include "mbnrsfm/scene.hpp"

namespace mbnrsfm {

// Largest cluster count handled by the exhaustive label matching.
inline constexpr int kMaxMatchedClusters = 8;

struct ReconstructionError {
  double per_frame_mean = 0.0;  // mean_f ||S_f - S_f^gt|| / ||S_f^gt||
  double whole = 0.0;           // ||S - S^gt|| / ||S^gt|| over the full stack
  int z_sign = 1;               // depth sign applied to the estimate
};

namespace detail {

inline void check_shapes(const Eigen::Ref<const DenseMatrix>& est,
                         const Eigen::Ref<const DenseMatrix>& gt) {
  if (est.rows() != gt.rows() || est.cols() != gt.cols()) {
    throw DimensionError("e3d: estimate is " + dims(est.rows(), est.cols()) +
                         ", ground truth is " + dims(gt.rows(), gt.cols()));
  }
  if (gt.rows() == 0 || gt.rows() % 3 != 0) {
    throw DimensionError("e3d: shapes must be 3F x P");
  }
}

inline double per_frame_mean_error(const Eigen::Ref<const DenseMatrix>& est,
                                   const Eigen::Ref<const DenseMatrix>& gt, int z_sign) {
  const Index frames = gt.rows() / 3;
  double total = 0.0;
  for (Index f = 0; f < frames; ++f) {
    DenseMatrix e = est.middleRows(3 * f, 3);
    e.row(2) *= static_cast<double>(z_sign);
    total += (e - gt.middleRows(3 * f, 3)).norm() / gt.middleRows(3 * f, 3).norm();
  }
  return total / static_cast<double>(frames);
}

inline double whole_error(const Eigen::Ref<const DenseMatrix>& est,
                          const Eigen::Ref<const DenseMatrix>& gt, int z_sign) {
  DenseMatrix e = est;
  for (Index f = 0; f < gt.rows() / 3; ++f) e.row(3 * f + 2) *= static_cast<double>(z_sign);
  return (e - gt).norm() / gt.norm();
}

}  // namespace detail

/// Relative 3D reconstruction error. A single depth sign s in {+1, -1} is
/// chosen for the whole sequence (z rows of the estimate multiplied by s) so
/// that the per-frame mean is smallest; `whole` uses the same sign.
inline ReconstructionError reconstruction_error(const Eigen::Ref<const DenseMatrix>& est,
                                                const Eigen::Ref<const DenseMatrix>& gt) {
  detail::check_shapes(est, gt);
  for (Index f = 0; f < gt.rows() / 3; ++f) {
    if (gt.middleRows(3 * f, 3).norm() == 0.0) {
      throw ValueError("e3d: ground-truth frame " + std::to_string(f) + " has zero norm");
    }
  }
  ReconstructionError out;
  const double plus = detail::per_frame_mean_error(est, gt, 1);
  const double minus = detail::per_frame_mean_error(est, gt, -1);
  out.z_sign = minus < plus ? -1 : 1;
  out.per_frame_mean = std::min(plus, minus);
  out.whole = detail::whole_error(est, gt, out.z_sign);
  return out;
}

inline double e3d(const Eigen::Ref<const DenseMatrix>& est, const Eigen::Ref<const DenseMatrix>& gt) {
  return reconstruction_error(est, gt).per_frame_mean;
}

/// Misclassified fraction under the best one-to-one matching of estimated ids
/// onto ground-truth ids (exhaustive over permutations, k <= 8).
inline double ems(const SegmentLabels& est, const SegmentLabels& gt) {
  if (est.size() != gt.size()) {
    throw DimensionError("ems: " + std::to_string(est.size()) + " estimated labels vs " +
                         std::to_string(gt.size()) + " ground-truth labels");
  }
  if (gt.size() == 0) throw DimensionError("ems: empty labelling");
  const int k = std::max(est.cluster_count(), gt.cluster_count());
  if (k > kMaxMatchedClusters) {
    throw ValueError("ems: " + std::to_string(k) + " clusters exceeds the supported " +
                     std::to_string(kMaxMatchedClusters));
  }
  // confusion(e, g): points with estimated id e and true id g.
  std::vector<long> confusion(static_cast<std::size_t>(k * k), 0);
  for (std::size_t i = 0; i < est.size(); ++i) {
    ++confusion[static_cast<std::size_t>(est[i] * k + gt[i])];
  }
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  long best = 0;
  do {
    long hit = 0;
    for (int e = 0; e < k; ++e) hit += confusion[static_cast<std::size_t>(e * k + perm[static_cast<std::size_t>(e)])];
    best = std::max(best, hit);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(static_cast<long>(gt.size()) - best) / static_cast<double>(gt.size());
}

/// ||W - R S||_F / ||W||_F
inline double reprojection_error(const MeasurementMatrix& w, const CameraMotion& r,
                                 const Eigen::Ref<const DenseMatrix>& s) {
  const double norm = w.data().norm();
  if (norm == 0.0) throw ValueError("reprojection_error: W has zero norm");
  return (w.data() - project(r, s).data()).norm() / norm;
}

}  // namespace mbnrsfm
