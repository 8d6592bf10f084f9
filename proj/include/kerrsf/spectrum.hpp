#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kerrsf {

enum class SpectrumKind { internal, absorption, output, experimental };

std::string_view to_string(SpectrumKind kind);
SpectrumKind spectrum_kind_from_string(std::string_view name);

/// Intensities on an ascending detuning grid (meV, relative to the laser).
/// Computed kinds require a uniform grid; experimental data need only be
/// strictly ascending.
class SpectrumSeries {
 public:
  static constexpr double kNegativityTol = 1e-8;

  /// Throws a validation error on size mismatch, non-ascending or
  /// (non-experimental) non-uniform grids, non-finite values, or values below
  /// -1e-8 * max(max(values), reference_scale). A positive reference scale
  /// keeps round-off-level spectra (all values ~ 1e-17) admissible.
  SpectrumSeries(std::vector<double> delta_grid, std::vector<double> values,
                 SpectrumKind kind, std::vector<double> weights = {},
                 double reference_scale = 0.0);

  const std::vector<double>& delta_grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  /// Per-point weights; empty when none were supplied.
  const std::vector<double>& weights() const { return weights_; }
  SpectrumKind kind() const { return kind_; }
  std::size_t size() const { return grid_.size(); }

  double spacing() const;
  double peak() const;

 private:
  std::vector<double> grid_;
  std::vector<double> values_;
  std::vector<double> weights_;
  SpectrumKind kind_;
};

std::vector<double> uniform_grid(double lo, double hi, std::size_t points);

bool is_uniform(std::span<const double> grid);

/// int |S(D) - S(-D)| dD / int S dD on a grid symmetric about zero
/// (mirror values obtained by linear interpolation).
double asymmetry_functional(const SpectrumSeries& spectrum);

/// Trapezoid rule.
double integrate(std::span<const double> grid, std::span<const double> values);

/// Linear interpolation of (grid, values) at x; x must lie inside the grid.
double interpolate(std::span<const double> grid, std::span<const double> values,
                   double x);

}  // namespace kerrsf
