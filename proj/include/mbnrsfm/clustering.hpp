#pragma once

// Affinity from self-expression coefficients and normalized spectral
// clustering (symmetric Laplacian, row-normalized embedding, k-means).

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "mbnrsfm/error.hpp"
#include "mbnrsfm/linalg.hpp"
#include "mbnrsfm/scene.hpp"

namespace mbnrsfm {

/// A = |C| + |C^T|
inline DenseMatrix build_affinity(const Eigen::Ref<const DenseMatrix>& c) {
  if (c.rows() != c.cols()) {
    throw DimensionError("build_affinity: C must be square, got " + dims(c.rows(), c.cols()));
  }
  return c.cwiseAbs() + c.transpose().cwiseAbs();
}

inline DenseMatrix build_affinity(const CoefficientMatrix& c) { return build_affinity(c.values()); }

struct KMeansOptions {
  int restarts = 20;
  int max_iters = 300;
};

struct KMeansResult {
  std::vector<int> labels;
  double inertia = std::numeric_limits<double>::infinity();
};

namespace detail {

inline double squared_distance(const DenseMatrix& x, Index row, const DenseMatrix& centres,
                               Index c) {
  return (x.row(row) - centres.row(c)).squaredNorm();
}

// One Lloyd run from a k-means++ seeding drawn from `rng`.
inline KMeansResult kmeans_once(const DenseMatrix& x, int k, std::mt19937_64& rng,
                                int max_iters) {
  const Index n = x.rows();
  DenseMatrix centres(k, x.cols());
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::uniform_int_distribution<Index> pick(0, n - 1);
  centres.row(0) = x.row(pick(rng));
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], squared_distance(x, i, centres, c - 1));
      total += d2[static_cast<std::size_t>(i)];
    }
    Index chosen = n - 1;
    if (total > 0.0) {
      double target = unit(rng) * total;
      for (Index i = 0; i < n; ++i) {
        target -= d2[static_cast<std::size_t>(i)];
        if (target < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centres.row(c) = x.row(chosen);
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(x, i, centres, 0);
      for (int c = 1; c < k; ++c) {
        const double d = squared_distance(x, i, centres, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (labels[static_cast<std::size_t>(i)] != best) {
        labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;
    DenseMatrix sums = DenseMatrix::Zero(k, x.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      // Empty clusters keep their previous centre.
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centres.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
  }

  KMeansResult out;
  out.inertia = 0.0;
  for (Index i = 0; i < n; ++i) {
    out.inertia += squared_distance(x, i, centres, labels[static_cast<std::size_t>(i)]);
  }
  out.labels = std::move(labels);
  return out;
}

// Renumbers ids by first occurrence so equal partitions give equal vectors.
inline std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::vector<int> map;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (static_cast<std::size_t>(l) >= map.size()) map.resize(static_cast<std::size_t>(l) + 1, -1);
    if (map[static_cast<std::size_t>(l)] < 0) {
      map[static_cast<std::size_t>(l)] = static_cast<int>(
          std::count_if(map.begin(), map.end(), [](int v) { return v >= 0; }));
    }
    out[i] = map[static_cast<std::size_t>(l)];
  }
  return out;
}

}  // namespace detail

/// k-means on the rows of `x`; restart r is seeded with seed + r and the
/// lowest-inertia run wins (earliest on ties).
inline KMeansResult kmeans(const DenseMatrix& x, int k, std::uint64_t seed,
                           const KMeansOptions& opt = {}) {
  if (k < 1 || k > x.rows()) {
    throw ValueError("kmeans: need 1 <= k <= " + std::to_string(x.rows()));
  }
  KMeansResult best;
  for (int r = 0; r < opt.restarts; ++r) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(r));
    KMeansResult run = detail::kmeans_once(x, k, rng, opt.max_iters);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  best.labels = detail::canonical_labels(best.labels);
  return best;
}

/// Symmetric normalized Laplacian I - D^-1/2 A D^-1/2. A zero-degree row
/// becomes the identity row.
inline DenseMatrix normalized_laplacian(const Eigen::Ref<const DenseMatrix>& a) {
  const Index n = a.rows();
  DenseVector inv_sqrt(n);
  for (Index i = 0; i < n; ++i) {
    const double d = a.row(i).sum();
    inv_sqrt(i) = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  DenseMatrix l = -(inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal());
  l.diagonal().array() += 1.0;
  return l;
}

/// Row-normalized embedding from the k eigenvectors of smallest eigenvalue.
inline DenseMatrix spectral_embedding(const Eigen::Ref<const DenseMatrix>& a, int k) {
  const DenseMatrix l = normalized_laplacian(a);
  Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(l);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("spectral_cluster: eigensolver did not converge");
  }
  DenseMatrix emb = eig.eigenvectors().leftCols(k);  // eigenvalues ascend
  for (Index i = 0; i < emb.rows(); ++i) {
    const double norm = emb.row(i).norm();
    if (norm > 0.0) emb.row(i) /= norm;
  }
  return emb;
}

inline SegmentLabels spectral_cluster(const Eigen::Ref<const DenseMatrix>& a, int k,
                                      std::uint64_t seed) {
  if (a.rows() != a.cols()) {
    throw DimensionError("spectral_cluster: affinity must be square, got " +
                         dims(a.rows(), a.cols()));
  }
  if (k < 1 || k > a.rows()) {
    throw ValueError("spectral_cluster: need 1 <= k <= P = " + std::to_string(a.rows()) +
                     ", got k = " + std::to_string(k));
  }
  require_finite(a, "spectral_cluster");
  if ((a.array() < 0.0).any()) throw ValueError("spectral_cluster: negative affinity");
  if (k == 1) return SegmentLabels(std::vector<int>(static_cast<std::size_t>(a.rows()), 0));
  return SegmentLabels(kmeans(spectral_embedding(a, k), k, seed).labels);
}

}  // namespace mbnrsfm
