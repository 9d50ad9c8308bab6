#pragma once

#include <cmath>
#include <vector>

#include <Eigen/SVD>

#include "eldm/error.hpp"
#include "eldm/linalg.hpp"

namespace eldm {

// ---------------------------------------------------------------------------
// Varimax

struct RotationResult {
  Matrix rotated;                        ///< Q x n, equals input * rotation
  Matrix rotation;                       ///< n x n orthogonal
  std::vector<double> criterion_history; ///< before the first sweep, then after each sweep
};

struct VarimaxOptions {
  int max_sweeps = 100;
  double tol = 1e-10;   ///< stop when a sweep improves the criterion by less than tol * criterion
  bool kaiser = false;  ///< row-normalize weights before rotating
};

/// Sum over factors of the variance of the squared weights:
/// sum_j sum_i (w_ij^2 - mean_i(w_ij^2))^2.
inline double varimax_criterion(const Matrix& w) {
  double v = 0.0;
  for (Index j = 0; j < w.cols(); ++j) {
    const Eigen::ArrayXd sq = w.col(j).array().square();
    v += (sq - sq.mean()).square().sum();
  }
  return v;
}

/// Orthogonal varimax rotation by cyclic sweeps of optimal planar rotations.
inline RotationResult varimax(const Matrix& factors, const VarimaxOptions& opt = {}) {
  const Index n = factors.cols();
  if (n < 2) throw ConfigError("varimax: at least 2 factors are required");
  if (!factors.allFinite()) throw DataError("varimax: non-finite weights");
  const auto p = static_cast<double>(factors.rows());

  Vector row_norm = Vector::Ones(factors.rows());
  Matrix w = factors;
  if (opt.kaiser) {
    row_norm = factors.rowwise().norm();
    for (Index i = 0; i < w.rows(); ++i) {
      if (row_norm(i) > 0.0) w.row(i) /= row_norm(i);
    }
  }

  RotationResult r;
  r.rotation = Matrix::Identity(n, n);
  double crit = varimax_criterion(w);
  r.criterion_history.push_back(crit);
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    for (Index a = 0; a < n - 1; ++a) {
      for (Index b = a + 1; b < n; ++b) {
        const Eigen::ArrayXd x = w.col(a).array();
        const Eigen::ArrayXd y = w.col(b).array();
        const Eigen::ArrayXd u = x.square() - y.square();
        const Eigen::ArrayXd v = 2.0 * x * y;
        const double sa = u.sum();
        const double sb = v.sum();
        const double sc = (u.square() - v.square()).sum();
        const double sd = 2.0 * (u * v).sum();
        const double num = sd - 2.0 * sa * sb / p;
        const double den = sc - (sa * sa - sb * sb) / p;
        const double phi = 0.25 * std::atan2(num, den);
        const double c = std::cos(phi);
        const double s = std::sin(phi);
        // x' = c x + s y, y' = -s x + c y
        const Vector xa = w.col(a);
        const Vector yb = w.col(b);
        w.col(a) = c * xa + s * yb;
        w.col(b) = -s * xa + c * yb;
        const Vector ra = r.rotation.col(a);
        const Vector rb = r.rotation.col(b);
        r.rotation.col(a) = c * ra + s * rb;
        r.rotation.col(b) = -s * ra + c * rb;
      }
    }
    const double next = varimax_criterion(w);
    r.criterion_history.push_back(next);
    const bool done = next - crit <= opt.tol * std::max(std::abs(crit), 1e-300);
    crit = next;
    if (done) break;
  }
  r.rotated = factors * r.rotation;
  return r;
}

// ---------------------------------------------------------------------------
// Procrustes

struct ProcrustesResult {
  double scale = 1.0;
  Matrix rotation;      ///< q x q orthogonal
  RowVector translation;
  double dissimilarity = 0.0;  ///< residual sum of squares / centered sum of squares of target
  Matrix transformed;   ///< scale * source * rotation + translation
};

struct ProcrustesOptions {
  bool allow_scaling = true;
  bool allow_reflection = true;
};

/// Least-squares similarity transform of `source` onto `target` (rows are points).
inline ProcrustesResult procrustes(const Matrix& target, const Matrix& source, const ProcrustesOptions& opt = {}) {
  if (target.rows() != source.rows() || target.cols() != source.cols()) throw ConfigError("procrustes: shape mismatch");
  if (!target.allFinite() || !source.allFinite()) throw DataError("procrustes: non-finite coordinates");
  const RowVector mu_t = target.colwise().mean();
  const RowVector mu_s = source.colwise().mean();
  const Matrix t0 = target.rowwise() - mu_t;
  const Matrix s0 = source.rowwise() - mu_s;
  const double ss_t = t0.squaredNorm();
  const double ss_s = s0.squaredNorm();
  if (!(ss_t > 0.0)) throw NumericError("procrustes: target points are all identical");

  ProcrustesResult r;
  const Index q = target.cols();
  if (ss_s > 0.0) {
    Eigen::JacobiSVD<Matrix> svd(s0.transpose() * t0, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Matrix u = svd.matrixU();
    Vector sv = svd.singularValues();
    if (!opt.allow_reflection && (u * svd.matrixV().transpose()).determinant() < 0.0) {
      u.col(q - 1) *= -1.0;
      sv(q - 1) *= -1.0;
    }
    r.rotation = u * svd.matrixV().transpose();
    r.scale = opt.allow_scaling ? sv.sum() / ss_s : 1.0;
  } else {
    r.rotation = Matrix::Identity(q, q);
    r.scale = opt.allow_scaling ? 0.0 : 1.0;
  }
  r.translation = mu_t - r.scale * mu_s * r.rotation;
  r.transformed = (r.scale * source * r.rotation).rowwise() + r.translation;
  r.dissimilarity = (target - r.transformed).squaredNorm() / ss_t;
  return r;
}

}  // namespace eldm
