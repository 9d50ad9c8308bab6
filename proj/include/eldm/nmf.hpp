#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "eldm/error.hpp"
#include "eldm/linalg.hpp"
#include "eldm/log.hpp"

namespace eldm {

/// Xs ~ W * F with W (N x q) and F (q x Q) entrywise nonnegative.
struct NmfFactors {
  Matrix w;
  Matrix f;
  std::vector<double> residual_history;  ///< objective at initialization and after every update
  std::uint64_t seed = 0;
};

struct NmfOptions {
  int max_iter = 2000;
  double tol = 1e-8;  ///< relative objective change
};

/// Root-mean-squared residual ||Xs - W F||_F / sqrt(N Q).
inline double nmf_residual(const Matrix& xs, const Matrix& w, const Matrix& f) {
  if (w.rows() != xs.rows() || f.cols() != xs.cols() || w.cols() != f.rows()) {
    throw ConfigError("nmf_residual: shape mismatch");
  }
  return (xs - w * f).norm() / std::sqrt(static_cast<double>(xs.rows() * xs.cols()));
}

inline double nmf_residual(const Matrix& xs, const NmfFactors& nmf) { return nmf_residual(xs, nmf.w, nmf.f); }

/// Lee-Seung multiplicative updates for the Frobenius objective, started from
/// uniform [0, 1) factors drawn from `seed`. Denominators are floored at 1e-12.
inline NmfFactors fit_nmf(const Matrix& xs, Index q, std::uint64_t seed, const NmfOptions& opt = {}) {
  if (!xs.allFinite()) throw DataError("nmf input has non-finite entries");
  if (xs.minCoeff() < 0.0) throw DataError("nmf input has negative entries; scale without centering or subtract minima");
  if (q < 1 || q > std::min(xs.rows(), xs.cols())) throw ConfigError("nmf: q must be in [1, min(N, Q)]");
  if (opt.max_iter < 1) throw ConfigError("nmf: max_iter must be positive");
  constexpr double floor = 1e-12;

  NmfFactors r;
  r.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  r.w.resize(xs.rows(), q);
  r.f.resize(q, xs.cols());
  for (Index i = 0; i < r.w.size(); ++i) r.w.data()[i] = u(rng);
  for (Index i = 0; i < r.f.size(); ++i) r.f.data()[i] = u(rng);

  double prev = nmf_residual(xs, r.w, r.f);
  r.residual_history.push_back(prev);
  for (int it = 0; it < opt.max_iter; ++it) {
    const Matrix wtw = r.w.transpose() * r.w;
    r.f.array() *= (r.w.transpose() * xs).array() / (wtw * r.f).array().max(floor);
    const Matrix fft = r.f * r.f.transpose();
    r.w.array() *= (xs * r.f.transpose()).array() / (r.w * fft).array().max(floor);
    const double d = nmf_residual(xs, r.w, r.f);
    r.residual_history.push_back(d);
    if (std::abs(prev - d) <= opt.tol * std::max(prev, 1e-300)) break;
    prev = d;
  }
  logger()->debug("nmf finished after {} updates, residual {}", r.residual_history.size() - 1, r.residual_history.back());
  return r;
}

}  // namespace eldm
