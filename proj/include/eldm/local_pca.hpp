#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "eldm/data_model.hpp"
#include "eldm/error.hpp"
#include "eldm/linalg.hpp"
#include "eldm/log.hpp"
#include "eldm/pca.hpp"

namespace eldm {

using Labels = std::vector<Index>;

/// Clusters in the preprocessed space, each with its own centroid and truncated basis.
/// Labels are zero-based.
struct LocalPartition {
  Labels labels;
  Matrix centroids;           ///< k x Q, scaled space
  std::vector<Matrix> bases;  ///< k matrices of shape Q x q, orthonormal columns
  Index q = 0;

  Index k() const noexcept { return centroids.rows(); }
  Index dims() const noexcept { return centroids.cols(); }
};

inline Index cluster_count(const Labels& labels) {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

inline std::vector<Index> cluster_sizes(const Labels& labels, Index k) {
  std::vector<Index> counts(static_cast<std::size_t>(k), 0);
  for (Index l : labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

namespace detail {

// Centroid and truncated basis of one cluster. Accepts a single member
// (used transiently for reseeded clusters).
inline void fit_cluster(const Matrix& xt, const std::vector<Index>& members, Index q, RowVector& centroid,
                        Matrix& basis) {
  Matrix m(static_cast<Index>(members.size()), xt.cols());
  for (std::size_t i = 0; i < members.size(); ++i) m.row(static_cast<Index>(i)) = xt.row(members[i]);
  centroid = m.colwise().mean();
  m.rowwise() -= centroid;
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
  Matrix v = svd.matrixV();
  apply_sign_convention(v);
  basis = v.leftCols(q);
}

inline LocalPartition fit_all(const Matrix& xt, const Labels& labels, Index k, Index q) {
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));
  LocalPartition p;
  p.labels = labels;
  p.q = q;
  p.centroids.resize(k, xt.cols());
  p.bases.resize(static_cast<std::size_t>(k));
  for (Index c = 0; c < k; ++c) {
    RowVector centroid;
    fit_cluster(xt, members[static_cast<std::size_t>(c)], q, centroid, p.bases[static_cast<std::size_t>(c)]);
    p.centroids.row(c) = centroid;
  }
  return p;
}

inline Labels argmin_rows(const Matrix& errors) {
  Labels out(static_cast<std::size_t>(errors.rows()));
  for (Index i = 0; i < errors.rows(); ++i) {
    Index best = 0;
    for (Index c = 1; c < errors.cols(); ++c) {
      if (errors(i, c) < errors(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

inline double mean_assigned_error(const Matrix& errors, const Labels& labels) {
  double acc = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) acc += errors(static_cast<Index>(i), labels[i]);
  return acc / static_cast<double>(labels.size());
}

// Moves the worst-reconstructed observation (from a cluster that can spare one)
// into each empty cluster.
inline void reseed_empty(Labels& labels, const Vector& own_error, Index k) {
  auto counts = cluster_sizes(labels, k);
  for (Index c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) continue;
    Index worst = -1;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (counts[static_cast<std::size_t>(labels[i])] < 2) continue;
      if (worst < 0 || own_error(static_cast<Index>(i)) > own_error(worst)) worst = static_cast<Index>(i);
    }
    if (worst < 0) throw NumericError("cannot reseed empty cluster: no cluster has a spare observation");
    logger()->debug("reseeding empty cluster {} with observation {}", c, worst);
    --counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(worst)])];
    labels[static_cast<std::size_t>(worst)] = c;
    ++counts[static_cast<std::size_t>(c)];
  }
}

inline Matrix squared_distances(const Matrix& xt, const Matrix& centroids) {
  Matrix d(xt.rows(), centroids.rows());
  for (Index c = 0; c < centroids.rows(); ++c) {
    d.col(c) = (xt.rowwise() - centroids.row(c)).rowwise().squaredNorm();
  }
  return d;
}

}  // namespace detail

/// Squared scaled-space reconstruction error of every observation on every cluster (N x k).
inline Matrix local_errors(const Matrix& xt, const LocalPartition& p) {
  require_cols(xt, p.dims(), "local_errors");
  Matrix e(xt.rows(), p.k());
  for (Index c = 0; c < p.k(); ++c) {
    const Matrix& a = p.bases[static_cast<std::size_t>(c)];
    const Matrix r = xt.rowwise() - p.centroids.row(c);
    e.col(c) = (r - (r * a) * a.transpose()).rowwise().squaredNorm();
  }
  return e;
}

inline double mean_reconstruction_error(const Matrix& xt, const LocalPartition& p) {
  return detail::mean_assigned_error(local_errors(xt, p), p.labels);
}

/// Reconstruction of every row on its assigned cluster, in the scaled space.
inline Matrix local_reconstruct_scaled(const Matrix& xt, const LocalPartition& p) {
  require_cols(xt, p.dims(), "local_reconstruct");
  if (static_cast<Index>(p.labels.size()) != xt.rows()) throw ConfigError("label count does not match rows");
  Matrix out(xt.rows(), xt.cols());
  for (Index i = 0; i < xt.rows(); ++i) {
    const Index c = p.labels[static_cast<std::size_t>(i)];
    const Matrix& a = p.bases[static_cast<std::size_t>(c)];
    const RowVector r = xt.row(i) - p.centroids.row(c);
    out.row(i) = p.centroids.row(c) + (r * a) * a.transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// K-means (used to initialize VQPCA)

struct KMeansResult {
  Labels labels;
  Matrix centroids;
  int iterations = 0;
};

/// Lloyd iterations from k-means++ seeding. Empty clusters take the farthest point.
inline KMeansResult kmeans(const Matrix& x, Index k, std::uint64_t seed, int max_iter = 100) {
  const Index n = x.rows();
  if (k < 1 || k > n) throw ConfigError("kmeans: k must be in [1, N]");
  std::mt19937_64 rng(seed);
  Matrix centroids(k, x.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centroids.row(0) = x.row(first(rng));
  Vector d2 = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        target -= d2(pick);
        if (target <= 0.0) break;
      }
    } else {
      pick = first(rng);
    }
    centroids.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  KMeansResult r;
  r.labels.assign(static_cast<std::size_t>(n), 0);
  for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
    const Matrix d = detail::squared_distances(x, centroids);
    Labels next = detail::argmin_rows(d);
    Vector own(n);
    for (Index i = 0; i < n; ++i) own(i) = d(i, next[static_cast<std::size_t>(i)]);
    detail::reseed_empty(next, own, k);
    const bool stable = next == r.labels && r.iterations > 1;
    r.labels = std::move(next);
    centroids.setZero();
    const auto counts = cluster_sizes(r.labels, k);
    for (Index i = 0; i < n; ++i) centroids.row(r.labels[static_cast<std::size_t>(i)]) += x.row(i);
    for (Index c = 0; c < k; ++c) centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    if (stable) break;
  }
  r.iterations = std::min(r.iterations, max_iter);
  r.centroids = centroids;
  return r;
}

// ---------------------------------------------------------------------------
// VQPCA

enum class VqpcaInit { random, kmeans, centroids, labels };

struct VqpcaOptions {
  Index k = 2;
  Index q = 1;
  VqpcaInit init = VqpcaInit::random;
  std::uint64_t seed = 0;
  Matrix initial_centroids;  ///< k x Q, for VqpcaInit::centroids
  Labels initial_labels;     ///< for VqpcaInit::labels
  double tol_centroid = 1e-8;
  double tol_error = 1e-6;
  int max_iter = 500;
};

struct VqpcaResult {
  LocalPartition partition;
  std::vector<double> error_history;  ///< mean squared scaled-space error after each refit
  int iterations = 0;
  bool converged = false;
};

inline std::string to_string(VqpcaInit i) {
  switch (i) {
    case VqpcaInit::random: return "random";
    case VqpcaInit::kmeans: return "kmeans";
    case VqpcaInit::centroids: return "centroids";
    case VqpcaInit::labels: return "labels";
  }
  return "random";
}

inline VqpcaInit parse_vqpca_init(std::string_view s) {
  if (s == "random") return VqpcaInit::random;
  if (s == "kmeans") return VqpcaInit::kmeans;
  if (s == "centroids") return VqpcaInit::centroids;
  if (s == "labels") return VqpcaInit::labels;
  throw ConfigError("unknown vqpca init '" + std::string(s) + "'");
}

/// Iteratively assigns observations to the cluster whose local q-dimensional
/// PCA reconstructs them best, then refits centroids and bases.
///
/// Stops when the labels stop changing, or when both the relative centroid
/// movement and the relative change of the mean error fall under their
/// tolerances, or after max_iter refits. The returned bases are always fitted
/// on the returned labels.
inline VqpcaResult vqpca(const Matrix& xt, const VqpcaOptions& opt) {
  const Index n = xt.rows();
  const Index dims = xt.cols();
  if (!xt.allFinite()) throw DataError("vqpca input has non-finite entries");
  if (opt.q < 1 || opt.q >= dims) throw ConfigError("vqpca: q must satisfy 1 <= q < Q");
  if (opt.k < 1) throw ConfigError("vqpca: k must be at least 1");
  if (opt.k > n) throw ConfigError("vqpca: k exceeds the number of observations");
  if (opt.max_iter < 1) throw ConfigError("vqpca: max_iter must be positive");
  const Index k = opt.k;

  Labels labels;
  switch (opt.init) {
    case VqpcaInit::random: {
      std::vector<Index> idx(static_cast<std::size_t>(n));
      std::iota(idx.begin(), idx.end(), Index{0});
      std::mt19937_64 rng(opt.seed);
      std::shuffle(idx.begin(), idx.end(), rng);
      Matrix c(k, dims);
      for (Index j = 0; j < k; ++j) c.row(j) = xt.row(idx[static_cast<std::size_t>(j)]);
      const Matrix d = detail::squared_distances(xt, c);
      labels = detail::argmin_rows(d);
      Vector own(n);
      for (Index i = 0; i < n; ++i) own(i) = d(i, labels[static_cast<std::size_t>(i)]);
      detail::reseed_empty(labels, own, k);
      break;
    }
    case VqpcaInit::kmeans:
      labels = kmeans(xt, k, opt.seed).labels;
      break;
    case VqpcaInit::centroids: {
      if (opt.initial_centroids.rows() != k || opt.initial_centroids.cols() != dims) {
        throw ConfigError("vqpca: initial centroids must be k x Q");
      }
      const Matrix d = detail::squared_distances(xt, opt.initial_centroids);
      labels = detail::argmin_rows(d);
      Vector own(n);
      for (Index i = 0; i < n; ++i) own(i) = d(i, labels[static_cast<std::size_t>(i)]);
      detail::reseed_empty(labels, own, k);
      break;
    }
    case VqpcaInit::labels:
      if (static_cast<Index>(opt.initial_labels.size()) != n) throw ConfigError("vqpca: initial labels must have N entries");
      for (Index l : opt.initial_labels) {
        if (l < 0 || l >= k) throw ConfigError("vqpca: initial label out of range");
      }
      labels = opt.initial_labels;
      detail::reseed_empty(labels, Vector::Zero(n), k);
      break;
  }

  VqpcaResult res;
  LocalPartition part = detail::fit_all(xt, labels, k, opt.q);
  Matrix prev_centroids;
  double prev_error = 0.0;
  for (res.iterations = 1;; ++res.iterations) {
    const Matrix errors = local_errors(xt, part);
    const double mean_error = detail::mean_assigned_error(errors, labels);
    res.error_history.push_back(mean_error);
    logger()->debug("vqpca iteration {}: mean error {}", res.iterations, mean_error);

    bool tol_met = false;
    if (res.iterations > 1) {
      const double move = (part.centroids - prev_centroids).norm() / std::max(prev_centroids.norm(), 1e-300);
      const double change = std::abs(prev_error - mean_error) / std::max(prev_error, 1e-300);
      tol_met = move < opt.tol_centroid && (change < opt.tol_error || mean_error <= 1e-300);
    }

    Labels next = detail::argmin_rows(errors);
    Vector own(n);
    for (Index i = 0; i < n; ++i) own(i) = errors(i, next[static_cast<std::size_t>(i)]);
    detail::reseed_empty(next, own, k);

    if (next == labels) {
      res.converged = true;
      break;
    }
    if (tol_met || res.iterations >= opt.max_iter) {
      res.converged = tol_met;
      labels = std::move(next);
      part = detail::fit_all(xt, labels, k, opt.q);
      res.error_history.push_back(mean_reconstruction_error(xt, part));
      break;
    }
    prev_centroids = part.centroids;
    prev_error = mean_error;
    labels = std::move(next);
    part = detail::fit_all(xt, labels, k, opt.q);
  }
  if (!res.converged) logger()->warn("vqpca stopped at max_iter={} without converging", opt.max_iter);
  res.partition = std::move(part);
  return res;
}

/// Initial labels for k+1 clusters: the previous partition with its worst
/// reconstructed observation split off into a new cluster.
inline Labels split_worst(const Matrix& xt, const LocalPartition& p) {
  const Matrix errors = local_errors(xt, p);
  Labels labels = p.labels;
  const auto counts = cluster_sizes(labels, p.k());
  Index worst = -1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (counts[static_cast<std::size_t>(labels[i])] < 2) continue;
    const double e = errors(static_cast<Index>(i), labels[i]);
    if (worst < 0 || e > errors(worst, labels[static_cast<std::size_t>(worst)])) worst = static_cast<Index>(i);
  }
  if (worst < 0) throw ConfigError("split_worst: no cluster can be split");
  labels[static_cast<std::size_t>(worst)] = p.k();
  return labels;
}

/// One-shot local PCA on a given clustering (no reassignment).
inline LocalPartition fit_local_bases(const Matrix& xt, const Labels& labels, Index q) {
  if (static_cast<Index>(labels.size()) != xt.rows()) throw ConfigError("fit_local_bases: label count does not match rows");
  if (q < 1 || q > xt.cols()) throw ConfigError("fit_local_bases: q out of range");
  for (Index l : labels) {
    if (l < 0) throw ConfigError("fit_local_bases: negative label");
  }
  const Index k = cluster_count(labels);
  const auto counts = cluster_sizes(labels, k);
  for (Index c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] < 2) {
      throw DataError("fit_local_bases: cluster " + std::to_string(c) + " has fewer than 2 members");
    }
  }
  return detail::fit_all(xt, labels, k, q);
}

// ---------------------------------------------------------------------------
// Conditioning-variable binning

/// Bins the mixture fraction around z_st: floor(k/2) equal-width bins on the lean
/// side [0, z_st), ceil(k/2) on the rich side [z_st, 1]. Bins with fewer than
/// `min_count` members are merged into a neighbor and labels renumbered.
inline Labels fpca_partition(const Vector& z, Index k, double z_st, Index min_count = 1) {
  if (k < 2) throw ConfigError("fpca: k must be at least 2");
  if (!(z_st > 0.0 && z_st < 1.0)) throw ConfigError("fpca: z_st must lie in (0, 1)");
  const Index lean = k / 2;
  const Index rich = k - lean;
  Labels labels(static_cast<std::size_t>(z.size()));
  bool outside = false;
  for (Index i = 0; i < z.size(); ++i) {
    const double v = z(i);
    if (v < 0.0 || v > 1.0) outside = true;
    Index b = 0;
    if (v < z_st) {
      b = static_cast<Index>(std::floor(std::max(v, 0.0) / z_st * static_cast<double>(lean)));
      b = std::clamp<Index>(b, 0, lean - 1);
    } else {
      b = static_cast<Index>(std::floor((std::min(v, 1.0) - z_st) / (1.0 - z_st) * static_cast<double>(rich)));
      b = lean + std::clamp<Index>(b, 0, rich - 1);
    }
    labels[static_cast<std::size_t>(i)] = b;
  }
  if (outside) logger()->warn("fpca: mixture fraction values outside [0, 1] placed in the edge bins");

  // Merge undersized bins into the next bin (or the previous one for the last bin).
  std::vector<Index> map(static_cast<std::size_t>(k));
  std::iota(map.begin(), map.end(), Index{0});
  auto counts = cluster_sizes(labels, k);
  Index bins = k;
  const Index need = std::max<Index>(min_count, 1);
  while (bins > 1) {
    Index small = -1;
    for (Index b = 0; b < bins; ++b) {
      if (counts[static_cast<std::size_t>(b)] < need) {
        small = b;
        break;
      }
    }
    if (small < 0) break;
    const Index into = small + 1 < bins ? small + 1 : small - 1;
    logger()->warn("fpca: bin {} has {} observations, merging with bin {}", small, counts[static_cast<std::size_t>(small)], into);
    counts[static_cast<std::size_t>(into)] += counts[static_cast<std::size_t>(small)];
    counts.erase(counts.begin() + small);
    for (auto& m : map) {
      if (m == small) m = into;
      if (m > small) --m;
    }
    --bins;
  }
  for (auto& l : labels) l = map[static_cast<std::size_t>(l)];
  return labels;
}

// ---------------------------------------------------------------------------
// Reconstruction and classification of individual observations

/// Reconstructs an observation (original units) from the given cluster's local manifold.
inline Vector local_reconstruct(const Vector& x, const LocalPartition& p, const Preprocessor& pre, Index cluster) {
  if (x.size() != p.dims() || pre.size() != p.dims()) throw ConfigError("local_reconstruct: dimension mismatch");
  if (cluster < 0 || cluster >= p.k()) throw ConfigError("local_reconstruct: cluster index out of range");
  const RowVector xt = (x.transpose() - pre.centers).array() / pre.scales.array();
  const Matrix& a = p.bases[static_cast<std::size_t>(cluster)];
  const RowVector r = xt - p.centroids.row(cluster);
  const RowVector rec = p.centroids.row(cluster) + (r * a) * a.transpose();
  return (rec.array() * pre.scales.array() + pre.centers.array()).transpose();
}

struct Classification {
  Index cluster = 0;
  Vector errors;  ///< squared scaled-space error on each cluster
};

/// Assigns an observation (original units) to the cluster with the smallest
/// local reconstruction error; ties go to the lowest index.
inline Classification classify(const Vector& x, const LocalPartition& p, const Preprocessor& pre) {
  if (x.size() != p.dims() || pre.size() != p.dims()) throw ConfigError("classify: dimension mismatch");
  const Matrix xt = apply_preprocessor(Matrix(x.transpose()), pre);
  Classification c;
  c.errors = local_errors(xt, p).row(0).transpose();
  c.errors.minCoeff(&c.cluster);
  return c;
}

/// Batch form over observations in original units.
inline Labels classify_rows(const Matrix& x, const LocalPartition& p, const Preprocessor& pre, Matrix* errors = nullptr) {
  const Matrix e = local_errors(apply_preprocessor(x, pre), p);
  if (errors != nullptr) *errors = e;
  return detail::argmin_rows(e);
}

}  // namespace eldm
