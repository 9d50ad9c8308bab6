#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>

#include "eldm/error.hpp"
#include "eldm/linalg.hpp"
#include "eldm/log.hpp"
#include "eldm/pca.hpp"

namespace eldm {

// ---------------------------------------------------------------------------
// PC-sources

/// Projects volumetric source terms onto the first q modes: S_z = A_q^T D^-1 S.
/// Source terms are scaled by the training scales but never centered.
inline Vector project_source_terms(const Vector& source, const PcaBasis& basis, Index q) {
  check_rank(q, basis.size(), "project_source_terms");
  if (source.size() != basis.size()) throw ConfigError("project_source_terms: dimension mismatch");
  if (!source.allFinite()) throw DataError("project_source_terms: non-finite source term");
  const Vector scaled = source.array() / basis.preprocessor.scales.transpose().array();
  return basis.truncated(q).transpose() * scaled;
}

/// Row-wise form: each row of `sources` is one observation's source vector.
inline Matrix project_source_terms(const Matrix& sources, const PcaBasis& basis, Index q) {
  check_rank(q, basis.size(), "project_source_terms");
  require_cols(sources, basis.size(), "project_source_terms");
  const Matrix scaled = sources.array().rowwise() / basis.preprocessor.scales.array();
  return scaled * basis.truncated(q);
}

// ---------------------------------------------------------------------------
// Gaussian process regression

/// Squared-exponential kernel s2 * exp(-0.5 * sum_d ((x_d - y_d) / l_d)^2).
struct KernelParams {
  double signal_variance = 1.0;
  Vector length_scales;

  void validate(Index dims) const {
    if (!(signal_variance > 0.0)) throw ConfigError("gpr: signal variance must be positive");
    if (length_scales.size() != dims) throw ConfigError("gpr: one length scale per input dimension is required");
    if (!(length_scales.array() > 0.0).all()) throw ConfigError("gpr: length scales must be positive");
  }
};

inline Matrix se_kernel(const Matrix& a, const Matrix& b, const KernelParams& k) {
  const Matrix as = a.array().rowwise() / k.length_scales.transpose().array();
  const Matrix bs = b.array().rowwise() / k.length_scales.transpose().array();
  Matrix out(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j) {
    out.col(j) = (-0.5 * (as.rowwise() - bs.row(j)).rowwise().squaredNorm().array()).exp() * k.signal_variance;
  }
  return out;
}

/// One dependent variable regressed on M training inputs with a zero prior mean.
struct GprModel {
  Matrix inputs;      ///< M x q
  Vector targets;     ///< M
  KernelParams kernel;
  double jitter = 1e-8;
  Matrix chol_lower;  ///< lower Cholesky factor of K + jitter I
  Vector alpha;       ///< (K + jitter I)^-1 targets

  Index dims() const noexcept { return inputs.cols(); }
};

inline GprModel fit_gpr(const Matrix& inputs, const Vector& targets, const KernelParams& kernel, double jitter = 1e-8) {
  if (inputs.rows() < 2) throw DataError("gpr: at least 2 training points are required");
  if (targets.size() != inputs.rows()) throw ConfigError("gpr: target count does not match inputs");
  if (!inputs.allFinite() || !targets.allFinite()) throw DataError("gpr: non-finite training data");
  if (!(jitter >= 0.0)) throw ConfigError("gpr: jitter must be nonnegative");
  kernel.validate(inputs.cols());

  GprModel m;
  m.inputs = inputs;
  m.targets = targets;
  m.kernel = kernel;
  m.jitter = jitter;
  Matrix k = se_kernel(inputs, inputs, kernel);
  k.diagonal().array() += jitter;
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success) {
    throw NumericError("gpr: kernel matrix is not positive definite; increase the jitter");
  }
  m.chol_lower = llt.matrixL();
  m.alpha = llt.solve(targets);
  return m;
}

struct GprPrediction {
  Vector mean;
  Vector variance;
};

inline GprPrediction predict_gpr(const GprModel& m, const Matrix& query) {
  GprPrediction p;
  if (query.rows() == 0) {
    p.mean.resize(0);
    p.variance.resize(0);
    return p;
  }
  require_cols(query, m.dims(), "predict_gpr");
  const Matrix ks = se_kernel(m.inputs, query, m.kernel);  // M x P
  p.mean = ks.transpose() * m.alpha;
  const Matrix v = m.chol_lower.triangularView<Eigen::Lower>().solve(ks);
  p.variance = (m.kernel.signal_variance - v.colwise().squaredNorm().array()).transpose();
  bool clamped = false;
  for (Index i = 0; i < p.variance.size(); ++i) {
    if (p.variance(i) < 0.0) {
      p.variance(i) = 0.0;
      clamped = true;
    }
  }
  if (clamped) logger()->warn("gpr: clamped negative posterior variance from round-off");
  return p;
}

/// Closed-form leave-one-out residuals: r_i = alpha_i / [(K + jitter I)^-1]_ii.
inline Vector gpr_loo_residuals(const GprModel& m) {
  const Index n = m.inputs.rows();
  const Matrix linv = m.chol_lower.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  const Vector kinv_diag = linv.colwise().squaredNorm().transpose();
  return m.alpha.array() / kinv_diag.array();
}

struct GprSearch {
  KernelParams best;
  double best_loo_rmse = std::numeric_limits<double>::infinity();
};

/// Grid search over a shared multiplier of the per-dimension input spreads and
/// over the signal variance (multiples of the target variance); minimizes the
/// leave-one-out RMSE. Grid points whose factorization fails are skipped.
inline GprSearch select_gpr_hyperparameters(const Matrix& inputs, const Vector& targets, double jitter = 1e-8) {
  if (inputs.rows() < 3) throw DataError("gpr: hyperparameter search needs at least 3 points");
  RowVector spread = column_stddev(inputs);
  for (Index j = 0; j < spread.size(); ++j) {
    if (!(spread(j) > 0.0)) spread(j) = 1.0;
  }
  double tvar = (targets.array() - targets.mean()).square().mean();
  if (!(tvar > 0.0)) tvar = 1.0;
  GprSearch out;
  for (int a = -6; a <= 4; ++a) {
    const double ell = std::pow(2.0, a);
    for (int b = -2; b <= 4; b += 2) {
      KernelParams k{tvar * std::pow(2.0, b), (spread * ell).transpose()};
      try {
        const GprModel m = fit_gpr(inputs, targets, k, jitter);
        const double rmse = std::sqrt(gpr_loo_residuals(m).squaredNorm() / static_cast<double>(targets.size()));
        if (std::isfinite(rmse) && rmse < out.best_loo_rmse) {
          out.best_loo_rmse = rmse;
          out.best = k;
        }
      } catch (const NumericError&) {
        continue;
      }
    }
  }
  if (!std::isfinite(out.best_loo_rmse)) throw NumericError("gpr: no grid point produced a usable model");
  return out;
}

}  // namespace eldm
