#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "eldm/error.hpp"

namespace eldm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_cols(const Matrix& m, Index cols, const char* what) {
  if (m.cols() != cols) {
    throw ConfigError(std::string(what) + ": expected " + std::to_string(cols) + " columns, got " +
                      std::to_string(m.cols()));
  }
}

/// Sample mean of each column.
inline RowVector column_means(const Matrix& m) { return m.colwise().mean(); }

/// Sample standard deviation of each column (N-1 denominator).
inline RowVector column_stddev(const Matrix& m) {
  const RowVector mean = column_means(m);
  const double denom = static_cast<double>(m.rows() - 1);
  return ((m.rowwise() - mean).array().square().colwise().sum() / denom).sqrt();
}

/// Pearson correlation of two equal-length vectors.
inline double correlation(const Vector& a, const Vector& b) {
  const Vector ac = a.array() - a.mean();
  const Vector bc = b.array() - b.mean();
  const double den = ac.norm() * bc.norm();
  return den > 0.0 ? ac.dot(bc) / den : 0.0;
}

// 64-bit FNV-1a over raw bytes; used for in-process identity tags, not integrity.
inline std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fingerprint(const Matrix& m) {
  const std::int64_t dims[2] = {static_cast<std::int64_t>(m.rows()), static_cast<std::int64_t>(m.cols())};
  const std::uint64_t h = fnv1a(dims, sizeof(dims));
  return fnv1a(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double), h);
}

}  // namespace eldm
