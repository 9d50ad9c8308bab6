#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include <Eigen/SVD>

#include "eldm/data_model.hpp"
#include "eldm/error.hpp"
#include "eldm/linalg.hpp"
#include "eldm/log.hpp"

namespace eldm {

/// Orthonormal Q x Q mode matrix (columns are modes) with variances along each mode.
///
/// Modes are ordered by nonincreasing eigenvalue; each mode is signed so that its
/// largest-magnitude weight is positive. Modes sharing an eigenvalue span a
/// well-defined subspace but the basis inside it is not unique.
struct PcaBasis {
  Matrix modes;
  Vector eigenvalues;
  Preprocessor preprocessor;

  Index size() const noexcept { return modes.rows(); }
  std::uint64_t id() const { return fingerprint(modes); }
  auto truncated(Index q) const { return modes.leftCols(q); }
};

/// Principal-component scores of a set of observations on the first q modes.
struct Scores {
  Matrix values;
  Index q = 0;
  std::uint64_t basis_id = 0;
};

/// Makes the largest-magnitude entry of every column positive (first one on ties).
inline void apply_sign_convention(Matrix& modes) {
  for (Index j = 0; j < modes.cols(); ++j) {
    Index imax = 0;
    modes.col(j).cwiseAbs().maxCoeff(&imax);
    if (modes(imax, j) < 0.0) modes.col(j) *= -1.0;
  }
}

/// Fits modes to already preprocessed data via SVD; eigenvalues are s^2 / (N - 1).
inline PcaBasis fit_pca(const Matrix& xt, const Preprocessor& pre) {
  if (xt.rows() < 2) throw DataError("PCA needs at least 2 observations");
  if (!xt.allFinite()) throw DataError("PCA input has non-finite entries");
  require_cols(xt, pre.size(), "fit_pca");
  const Index q = xt.cols();
  Eigen::JacobiSVD<Matrix> svd(xt, Eigen::ComputeFullV);
  PcaBasis b;
  b.modes = svd.matrixV();
  b.eigenvalues = Vector::Zero(q);
  const Vector& s = svd.singularValues();
  for (Index j = 0; j < s.size(); ++j) b.eigenvalues(j) = s(j) * s(j) / static_cast<double>(xt.rows() - 1);
  apply_sign_convention(b.modes);
  b.preprocessor = pre;
  return b;
}

inline PcaBasis fit_pca(const Matrix& xt) { return fit_pca(xt, Preprocessor::identity(xt.cols())); }

/// Preprocesses `x` with the given scaling and fits the modes.
inline PcaBasis fit_pca(const StateMatrix& x, Scaling scaling, bool centered = true) {
  Preprocessor pre = fit_preprocessor(x, scaling, centered);
  return fit_pca(apply_preprocessor(x, pre), pre);
}

inline void check_rank(Index q, Index full, const char* what) {
  if (q < 1 || q > full) {
    throw ConfigError(std::string(what) + ": q must be in [1, " + std::to_string(full) + "], got " + std::to_string(q));
  }
}

inline Scores transform(const Matrix& xt, const PcaBasis& b, Index q) {
  check_rank(q, b.size(), "transform");
  require_cols(xt, b.size(), "transform");
  return {xt * b.truncated(q), q, b.id()};
}

/// Rank-q reconstruction in the preprocessed space.
inline Matrix reconstruct_scaled(const Scores& z, const PcaBasis& b) {
  if (z.basis_id != b.id()) throw ConfigError("scores were not produced by this basis");
  check_rank(z.q, b.size(), "reconstruct");
  return z.values * b.truncated(z.q).transpose();
}

/// Rank-q reconstruction returned in original units.
inline Matrix reconstruct(const Scores& z, const PcaBasis& b) {
  return invert_preprocessor(reconstruct_scaled(z, b), b.preprocessor);
}

inline Vector explained_variance(const PcaBasis& b) {
  const double total = b.eigenvalues.sum();
  if (!(total > 0.0)) throw NumericError("explained variance undefined: all eigenvalues are zero");
  Vector cum(b.eigenvalues.size());
  double acc = 0.0;
  for (Index j = 0; j < cum.size(); ++j) {
    acc += b.eigenvalues(j);
    cum(j) = acc / total;
  }
  cum(cum.size() - 1) = 1.0;
  return cum;
}

// ---------------------------------------------------------------------------
// Reconstruction quality

struct Summary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double min = std::numeric_limits<double>::quiet_NaN();
  double max = std::numeric_limits<double>::quiet_NaN();
};

/// Aggregates over the finite entries only.
inline Summary summarize(const Vector& v) {
  Summary s;
  double acc = 0.0;
  Index n = 0;
  for (Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v(i))) continue;
    acc += v(i);
    s.min = n == 0 ? v(i) : std::min(s.min, v(i));
    s.max = n == 0 ? v(i) : std::max(s.max, v(i));
    ++n;
  }
  if (n > 0) s.mean = acc / static_cast<double>(n);
  return s;
}

struct ReconstructionReport {
  Vector r2;
  Vector nrmse;
  Summary r2_summary;
  Summary nrmse_summary;
};

/// Per-variable coefficient of determination and RMSE normalized by |mean|.
/// Constant columns get R^2 = NaN and zero-mean columns NRMSE = NaN, each with a warning.
inline ReconstructionReport report_errors(const Matrix& x, const Matrix& xhat) {
  if (x.rows() != xhat.rows() || x.cols() != xhat.cols()) throw ConfigError("report_errors: shape mismatch");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto n = static_cast<double>(x.rows());
  ReconstructionReport r;
  r.r2.resize(x.cols());
  r.nrmse.resize(x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const double ss_res = (x.col(j) - xhat.col(j)).squaredNorm();
    const double ss_tot = (x.col(j).array() - mean).square().sum();
    if (ss_tot > 0.0) {
      r.r2(j) = 1.0 - ss_res / ss_tot;
    } else {
      logger()->warn("R^2 undefined for constant variable {}", j + 1);
      r.r2(j) = nan;
    }
    if (mean != 0.0) {
      r.nrmse(j) = std::sqrt(ss_res / n) / std::abs(mean);
    } else {
      logger()->warn("NRMSE undefined for zero-mean variable {}", j + 1);
      r.nrmse(j) = nan;
    }
  }
  r.r2_summary = summarize(r.r2);
  r.nrmse_summary = summarize(r.nrmse);
  return r;
}

}  // namespace eldm
