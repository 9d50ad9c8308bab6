#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "eldm/data_model.hpp"
#include "eldm/error.hpp"
#include "eldm/linalg.hpp"

namespace eldm {

struct SpeciesRoles {
  /// Fuel-stream species and their mass fractions in that stream.
  std::vector<std::pair<std::string, double>> fuel = {{"H2", 0.2}, {"CO", 0.8}};
  std::string oxidizer = "O2";
  double oxidizer_stream = 0.232;
  /// Product species and their share of the burnt mass.
  std::vector<std::pair<std::string, double>> products = {{"H2O", 0.45}, {"CO2", 0.55}};
  std::string intermediate = "OH";
  double intermediate_peak = 0.1;   ///< peak share of the product mass
  double intermediate_width = 0.08; ///< Gaussian width in mixture fraction
  std::string inert = "N2";
  double t_oxidizer = 300.0;
  double t_fuel = 300.0;
  double t_peak = 2200.0;
  double temperature_width = 0.15;
};

struct SyntheticSpec {
  Index n_points = 2000;
  double z_st = 0.42;
  SpeciesRoles roles;
  double noise_level = 0.0;  ///< relative Gaussian noise amplitude
  std::uint64_t seed = 0;
  double time = 0.0;         ///< snapshot parameter; larger values broaden and cool the flame

  void validate() const {
    if (n_points < 10) throw ConfigError("synthetic: n_points must be at least 10");
    if (!(z_st > 0.0 && z_st < 1.0)) throw ConfigError("synthetic: z_st must lie in (0, 1)");
    if (!(noise_level >= 0.0)) throw ConfigError("synthetic: noise_level must be nonnegative");
    if (roles.fuel.empty()) throw ConfigError("synthetic: at least one fuel species is required");
    double yf = 0.0;
    for (const auto& [name, y] : roles.fuel) yf += y;
    if (!(yf > 0.0 && yf <= 1.0)) throw ConfigError("synthetic: fuel-stream fractions must sum into (0, 1]");
    if (!(roles.oxidizer_stream > 0.0 && roles.oxidizer_stream <= 1.0)) {
      throw ConfigError("synthetic: oxidizer-stream fraction must be in (0, 1]");
    }
  }

  double fuel_stream_fraction() const {
    double yf = 0.0;
    for (const auto& [name, y] : roles.fuel) yf += y;
    return yf;
  }

  StreamDefinition streams() const {
    StreamDefinition s;
    s.yf_fuel_stream = fuel_stream_fraction();
    s.yo2_ox_stream = roles.oxidizer_stream;
    s.nu = StreamDefinition::nu_for(z_st, s.yf_fuel_stream, s.yo2_ox_stream);
    for (const auto& [name, y] : roles.fuel) s.fuel_columns.push_back(name);
    s.oxidizer_column = roles.oxidizer;
    return s;
  }
};

struct SyntheticData {
  StateMatrix state;
  Vector mixture_fraction;
  Vector progress;
  StreamDefinition streams;
};

/// Non-premixed flamelet-like states on a two-parameter manifold (mixture
/// fraction, progress variable).
///
/// Mixture fraction follows arcsine quantiles on [0, 1] (endpoints included), so
/// the pure streams are well populated as in a jet. Fuel and oxidizer
/// interpolate between the mixing line and the Burke-Schumann limit by the
/// progress variable; the burnt mass becomes products, part of it an
/// intermediate with a Gaussian profile around z_st. Temperature rises above
/// the mixing line by a Gaussian bump scaled by progress. The inert species
/// closes the mass balance.
inline SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  const SpeciesRoles& r = spec.roles;
  const Index n = spec.n_points;
  const double zst = spec.z_st;
  const double yf1 = spec.fuel_stream_fraction();
  const double yo2 = r.oxidizer_stream;
  const double t_width = r.temperature_width * (1.0 + 0.2 * spec.time);
  const double t_rise = (r.t_peak - (r.t_oxidizer + zst * (r.t_fuel - r.t_oxidizer))) * (1.0 - 0.03 * spec.time);
  const double i_width = r.intermediate_width * (1.0 + 0.1 * spec.time);

  std::vector<Column> columns{{"T", ColumnRole::temperature}};
  for (const auto& [name, y] : r.fuel) columns.push_back({name, ColumnRole::species});
  columns.push_back({r.oxidizer, ColumnRole::species});
  for (const auto& [name, y] : r.products) columns.push_back({name, ColumnRole::species});
  columns.push_back({r.intermediate, ColumnRole::species});
  columns.push_back({r.inert, ColumnRole::species});
  const auto q = static_cast<Index>(columns.size());
  const Index inert_col = q - 1;

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix x(n, q);
  Vector z(n);
  Vector progress(n);
  for (Index i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n - 1);
    const double zi = 0.5 - 0.5 * std::cos(std::numbers::pi * u);
    const double c = uniform(rng);
    z(i) = zi;
    progress(i) = c;

    const double yf_mix = yf1 * zi;
    const double yo_mix = yo2 * (1.0 - zi);
    const double yf_eq = zi < zst ? 0.0 : yf1 * (zi - zst) / (1.0 - zst);
    const double yo_eq = zi < zst ? yo2 * (1.0 - zi / zst) : 0.0;
    const double yf = yf_mix + c * (yf_eq - yf_mix);
    const double yo = yo_mix + c * (yo_eq - yo_mix);
    const double burnt = std::max((yf_mix - yf) + (yo_mix - yo), 0.0);
    const double share = r.intermediate_peak * std::exp(-0.5 * std::pow((zi - zst) / i_width, 2));

    Index j = 0;
    const double t_mix = r.t_oxidizer + zi * (r.t_fuel - r.t_oxidizer);
    x(i, j++) = t_mix + c * t_rise * std::exp(-0.5 * std::pow((zi - zst) / t_width, 2));
    for (const auto& [name, frac] : r.fuel) x(i, j++) = yf * frac / yf1;
    x(i, j++) = yo;
    for (const auto& [name, frac] : r.products) x(i, j++) = burnt * (1.0 - share) * frac;
    x(i, j++) = burnt * share;

    if (spec.noise_level > 0.0) {
      for (Index k = 0; k < inert_col; ++k) x(i, k) *= 1.0 + spec.noise_level * normal(rng);
    }
    double sum = 0.0;
    for (Index k = 1; k < inert_col; ++k) {
      x(i, k) = std::clamp(x(i, k), 0.0, 1.0);
      sum += x(i, k);
    }
    if (sum > 1.0) {
      for (Index k = 1; k < inert_col; ++k) x(i, k) /= sum;
      sum = 1.0;
    }
    x(i, inert_col) = std::clamp(1.0 - sum, 0.0, 1.0);
  }
  return {StateMatrix(std::move(x), std::move(columns)), std::move(z), std::move(progress), spec.streams()};
}

}  // namespace eldm
