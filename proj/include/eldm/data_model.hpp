#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "eldm/error.hpp"
#include "eldm/linalg.hpp"
#include "eldm/log.hpp"

namespace eldm {

enum class ColumnRole { temperature, pressure, species, generic };

inline std::string to_string(ColumnRole r) {
  switch (r) {
    case ColumnRole::temperature: return "temperature";
    case ColumnRole::pressure: return "pressure";
    case ColumnRole::species: return "species";
    case ColumnRole::generic: return "generic";
  }
  return "generic";
}

inline ColumnRole parse_column_role(std::string_view s) {
  if (s == "temperature" || s == "T") return ColumnRole::temperature;
  if (s == "pressure" || s == "p") return ColumnRole::pressure;
  if (s == "species" || s == "species-mass-fraction" || s == "Y") return ColumnRole::species;
  if (s == "generic") return ColumnRole::generic;
  throw ConfigError("unknown column role '" + std::string(s) + "'");
}

struct Column {
  std::string name;
  ColumnRole role = ColumnRole::generic;
};

// Observations in rows, thermo-chemical variables in columns.
class StateMatrix {
public:
  StateMatrix(Matrix values, std::vector<Column> columns, std::vector<std::string> row_ids = {})
      : values_(std::move(values)), columns_(std::move(columns)), row_ids_(std::move(row_ids)) {
    validate();
  }

  const Matrix& values() const noexcept { return values_; }
  const std::vector<Column>& columns() const noexcept { return columns_; }
  const std::vector<std::string>& row_ids() const noexcept { return row_ids_; }
  Index rows() const noexcept { return values_.rows(); }
  Index cols() const noexcept { return values_.cols(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(columns_.size());
    for (const auto& c : columns_) out.push_back(c.name);
    return out;
  }

  std::optional<Index> find(std::string_view name) const {
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (columns_[j].name == name) return static_cast<Index>(j);
    }
    return std::nullopt;
  }

  Index index_of(std::string_view name) const {
    auto j = find(name);
    if (!j) throw DataError("no column named '" + std::string(name) + "'");
    return *j;
  }

  Vector column(std::string_view name) const { return values_.col(index_of(name)); }

  /// Subset of rows, keeping labels.
  StateMatrix select_rows(const std::vector<Index>& rows) const {
    Matrix v(static_cast<Index>(rows.size()), cols());
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      v.row(static_cast<Index>(i)) = values_.row(rows[i]);
      if (!row_ids_.empty()) ids.push_back(row_ids_[static_cast<std::size_t>(rows[i])]);
    }
    return StateMatrix(std::move(v), columns_, std::move(ids));
  }

private:
  void validate() const {
    if (values_.rows() < 2) throw DataError("state matrix needs at least 2 observations");
    if (values_.cols() < 1) throw DataError("state matrix needs at least 1 variable");
    if (static_cast<Index>(columns_.size()) != values_.cols()) {
      throw DataError("column label count does not match matrix width");
    }
    if (!row_ids_.empty() && static_cast<Index>(row_ids_.size()) != values_.rows()) {
      throw DataError("row identifier count does not match matrix height");
    }
    if (!values_.allFinite()) throw DataError("state matrix contains non-finite entries");
    for (Index j = 0; j < values_.cols(); ++j) {
      if (columns_[static_cast<std::size_t>(j)].role != ColumnRole::species) continue;
      const double lo = values_.col(j).minCoeff();
      const double hi = values_.col(j).maxCoeff();
      if (lo < 0.0 || hi > 1.0) {
        throw DataError("species column '" + columns_[static_cast<std::size_t>(j)].name +
                        "' has entries outside [0, 1]");
      }
    }
  }

  Matrix values_;
  std::vector<Column> columns_;
  std::vector<std::string> row_ids_;
};

// ---------------------------------------------------------------------------
// Delimited text I/O

using Schema = std::map<std::string, ColumnRole>;

struct LoadOptions {
  char delimiter = ',';
  /// Header name of a non-numeric row identifier column, excluded from the values.
  std::optional<std::string> row_id_column;
  /// Species fractions within this distance outside [0, 1] are clamped; further out is an error.
  double clamp_tolerance = 1e-9;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses a delimited table with a mandatory header row. Columns not named in
/// `schema` get the generic role; schema names absent from the header are an error.
inline StateMatrix load_state_matrix(std::istream& in, const Schema& schema, const LoadOptions& opt = {}) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) throw DataError("missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto header_fields = detail::split(line, opt.delimiter);
  std::vector<std::string> header(header_fields.begin(), header_fields.end());

  std::optional<std::size_t> id_col;
  std::vector<Column> columns;
  std::vector<std::size_t> value_cols;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j].empty()) throw DataError("empty header name in column " + std::to_string(j + 1));
    if (opt.row_id_column && header[j] == *opt.row_id_column) {
      id_col = j;
      continue;
    }
    auto it = schema.find(header[j]);
    columns.push_back({header[j], it == schema.end() ? ColumnRole::generic : it->second});
    value_cols.push_back(j);
  }
  for (const auto& [name, role] : schema) {
    if (std::find(header.begin(), header.end(), name) == header.end()) {
      throw DataError("schema column '" + name + "' not found in header");
    }
  }
  if (opt.row_id_column && !id_col) {
    throw DataError("row id column '" + *opt.row_id_column + "' not found in header");
  }

  std::vector<std::vector<double>> rows;
  std::vector<std::string> ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, opt.delimiter);
    if (fields.size() != header.size()) {
      throw DataError(fmt::format("row {} has {} fields, header has {}", line_no, fields.size(), header.size()));
    }
    std::vector<double> row;
    row.reserve(value_cols.size());
    for (std::size_t c : value_cols) {
      auto v = detail::parse_double(fields[c]);
      if (!v) {
        throw DataError(fmt::format("non-numeric value '{}' at row {}, column '{}'", fields[c], line_no, header[c]));
      }
      if (!std::isfinite(*v)) {
        throw DataError(fmt::format("non-finite value at row {}, column '{}'", line_no, header[c]));
      }
      row.push_back(*v);
    }
    if (id_col) ids.emplace_back(fields[*id_col]);
    rows.push_back(std::move(row));
  }

  Matrix values(static_cast<Index>(rows.size()), static_cast<Index>(columns.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
  }

  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].role != ColumnRole::species) continue;
    for (Index i = 0; i < values.rows(); ++i) {
      double& v = values(i, static_cast<Index>(j));
      if (v >= 0.0 && v <= 1.0) continue;
      if (v < -opt.clamp_tolerance || v > 1.0 + opt.clamp_tolerance) {
        throw DataError(fmt::format("species '{}' value {} at data row {} outside [0, 1]", columns[j].name, v, i + 1));
      }
      logger()->warn("clamping species '{}' value {} at data row {} into [0, 1]", columns[j].name, v, i + 1);
      v = std::clamp(v, 0.0, 1.0);
    }
  }
  return StateMatrix(std::move(values), std::move(columns), std::move(ids));
}

inline StateMatrix load_state_matrix(const std::string& text, const Schema& schema, const LoadOptions& opt = {}) {
  std::istringstream in(text);
  return load_state_matrix(in, schema, opt);
}

/// Writes a header plus rows using shortest round-trip formatting.
inline void write_delimited(std::ostream& out, const std::vector<std::string>& header, const Matrix& values,
                            char delimiter = ',') {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) out << delimiter;
    out << header[j];
  }
  out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j) out << delimiter;
      out << fmt::format("{}", values(i, j));
    }
    out << '\n';
  }
}

inline void write_state_matrix(std::ostream& out, const StateMatrix& x, char delimiter = ',') {
  write_delimited(out, x.names(), x.values(), delimiter);
}

// ---------------------------------------------------------------------------
// Centering and scaling

enum class Scaling { none, autoscale, pareto, range, vast };

// `minimum` subtracts column minima so the scaled data stays nonnegative.
enum class Centering { none, mean, minimum };

inline std::string to_string(Scaling s) {
  switch (s) {
    case Scaling::none: return "none";
    case Scaling::autoscale: return "auto";
    case Scaling::pareto: return "pareto";
    case Scaling::range: return "range";
    case Scaling::vast: return "vast";
  }
  return "none";
}

inline Scaling parse_scaling(std::string_view s) {
  if (s == "none") return Scaling::none;
  if (s == "auto") return Scaling::autoscale;
  if (s == "pareto") return Scaling::pareto;
  if (s == "range") return Scaling::range;
  if (s == "vast") return Scaling::vast;
  throw ConfigError("unknown scaling method '" + std::string(s) + "'");
}

inline std::string to_string(Centering c) {
  switch (c) {
    case Centering::none: return "none";
    case Centering::mean: return "mean";
    case Centering::minimum: return "minimum";
  }
  return "none";
}

inline Centering parse_centering(std::string_view s) {
  if (s == "none") return Centering::none;
  if (s == "mean") return Centering::mean;
  if (s == "minimum") return Centering::minimum;
  throw ConfigError("unknown centering '" + std::string(s) + "'");
}

/// Per-variable centers and scales: Xt = (X - centers) / scales.
struct Preprocessor {
  RowVector centers;
  RowVector scales;
  Scaling method = Scaling::none;
  Centering centering = Centering::mean;

  bool centered() const noexcept { return centering != Centering::none; }
  Index size() const noexcept { return scales.size(); }

  static Preprocessor identity(Index q) {
    return {RowVector::Zero(q), RowVector::Ones(q), Scaling::none, Centering::none};
  }
};

inline Preprocessor fit_preprocessor(const Matrix& x, Scaling method, Centering centering = Centering::mean) {
  if (x.rows() < 2) throw DataError("preprocessing needs at least 2 observations");
  for (Index j = 0; j < x.cols(); ++j) {
    if (!x.col(j).allFinite()) throw DataError(fmt::format("column {} has non-finite entries", j + 1));
  }
  const Index q = x.cols();
  Preprocessor p;
  p.method = method;
  p.centering = centering;
  const RowVector mean = column_means(x);
  switch (centering) {
    case Centering::none: p.centers = RowVector::Zero(q); break;
    case Centering::mean: p.centers = mean; break;
    case Centering::minimum: p.centers = x.colwise().minCoeff(); break;
  }

  const RowVector sigma = column_stddev(x);
  p.scales.resize(q);
  for (Index j = 0; j < q; ++j) {
    double d = 1.0;
    switch (method) {
      case Scaling::none: d = 1.0; break;
      case Scaling::autoscale: d = sigma(j); break;
      case Scaling::pareto: d = std::sqrt(sigma(j)); break;
      case Scaling::range: d = x.col(j).maxCoeff() - x.col(j).minCoeff(); break;
      case Scaling::vast:
        if (mean(j) == 0.0) throw DataError(fmt::format("vast scaling undefined for zero-mean column {}", j + 1));
        // Negative means would give a negative factor; the magnitude is used.
        d = sigma(j) * sigma(j) / std::abs(mean(j));
        break;
    }
    if (!(d > 0.0) || !std::isfinite(d)) {
      logger()->warn("column {} has zero scale under {} scaling; using 1", j + 1, to_string(method));
      d = 1.0;
    }
    p.scales(j) = d;
  }
  return p;
}

inline Preprocessor fit_preprocessor(const StateMatrix& x, Scaling method, bool centered) {
  return fit_preprocessor(x.values(), method, centered ? Centering::mean : Centering::none);
}

inline Matrix apply_preprocessor(const Matrix& x, const Preprocessor& p) {
  require_cols(x, p.size(), "apply_preprocessor");
  return (x.rowwise() - p.centers).array().rowwise() / p.scales.array();
}

inline Matrix apply_preprocessor(const StateMatrix& x, const Preprocessor& p) {
  return apply_preprocessor(x.values(), p);
}

inline Matrix invert_preprocessor(const Matrix& xt, const Preprocessor& p) {
  require_cols(xt, p.size(), "invert_preprocessor");
  Matrix out = xt.array().rowwise() * p.scales.array();
  out.rowwise() += p.centers;
  return out;
}

// ---------------------------------------------------------------------------
// Derived scalars

/// Two-stream fuel/oxidizer description for the conserved-scalar mixture fraction.
struct StreamDefinition {
  double nu = 1.0;              ///< stoichiometric oxidizer-to-fuel mass ratio
  double yf_fuel_stream = 1.0;  ///< fuel mass fraction in the fuel stream
  double yo2_ox_stream = 0.232; ///< oxidizer mass fraction in the oxidizer stream
  std::vector<std::string> fuel_columns;
  std::string oxidizer_column = "O2";

  void validate() const {
    if (!(yf_fuel_stream > 0.0 && yf_fuel_stream <= 1.0)) throw ConfigError("fuel-stream fuel fraction must be in (0, 1]");
    if (!(yo2_ox_stream > 0.0 && yo2_ox_stream <= 1.0)) throw ConfigError("oxidizer-stream O2 fraction must be in (0, 1]");
    if (!(nu * yf_fuel_stream + yo2_ox_stream > 0.0)) throw ConfigError("mixture fraction denominator must be positive");
    if (fuel_columns.empty()) throw ConfigError("at least one fuel column is required");
  }

  double stoichiometric() const { return yo2_ox_stream / (nu * yf_fuel_stream + yo2_ox_stream); }

  /// nu such that the stoichiometric mixture fraction equals z_st.
  static double nu_for(double z_st, double yf_fuel_stream, double yo2_ox_stream) {
    return yo2_ox_stream * (1.0 - z_st) / (z_st * yf_fuel_stream);
  }
};

inline double mixture_fraction(double y_fuel, double y_o2, const StreamDefinition& s) {
  return (s.nu * y_fuel - y_o2 + s.yo2_ox_stream) / (s.nu * s.yf_fuel_stream + s.yo2_ox_stream);
}

inline Vector mixture_fraction(const StateMatrix& x, const StreamDefinition& s) {
  s.validate();
  std::vector<Index> fuel;
  for (const auto& name : s.fuel_columns) fuel.push_back(x.index_of(name));
  const Index ox = x.index_of(s.oxidizer_column);
  Vector z(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    double yf = 0.0;
    for (Index j : fuel) yf += x.values()(i, j);
    z(i) = mixture_fraction(yf, x.values()(i, ox), s);
  }
  return z;
}

struct MixingChemistryTimescales {
  double tau_mixing = 1.0;   ///< seconds
  double tau_chemical = 1.0; ///< seconds
};

inline double damkohler(const MixingChemistryTimescales& t) {
  if (!(t.tau_mixing > 0.0) || !(t.tau_chemical > 0.0)) throw ConfigError("timescales must be strictly positive");
  return t.tau_mixing / t.tau_chemical;
}

}  // namespace eldm
