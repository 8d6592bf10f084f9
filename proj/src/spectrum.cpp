#include "kerrsf/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kerrsf/error.hpp"

namespace kerrsf {

std::string_view to_string(SpectrumKind kind) {
  switch (kind) {
    case SpectrumKind::internal: return "internal";
    case SpectrumKind::absorption: return "absorption";
    case SpectrumKind::output: return "output";
    case SpectrumKind::experimental: return "experimental";
  }
  return "unknown";
}

SpectrumKind spectrum_kind_from_string(std::string_view name) {
  if (name == "internal") return SpectrumKind::internal;
  if (name == "absorption") return SpectrumKind::absorption;
  if (name == "output") return SpectrumKind::output;
  if (name == "experimental") return SpectrumKind::experimental;
  fail_validation("unknown spectrum kind '" + std::string(name) + "'");
}

bool is_uniform(std::span<const double> grid) {
  if (grid.size() < 3) return true;
  const double h = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
  const double scale = std::max(std::abs(grid.front()), std::abs(grid.back()));
  const double tol = 1e-12 * std::abs(h) + 8.0 * std::numeric_limits<double>::epsilon() * scale;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (std::abs((grid[k] - grid[k - 1]) - h) > tol) return false;
  }
  return true;
}

SpectrumSeries::SpectrumSeries(std::vector<double> delta_grid,
                               std::vector<double> values, SpectrumKind kind,
                               std::vector<double> weights, double reference_scale)
    : grid_(std::move(delta_grid)),
      values_(std::move(values)),
      weights_(std::move(weights)),
      kind_(kind) {
  if (grid_.size() != values_.size()) {
    fail_validation("spectrum grid and values differ in length");
  }
  if (!weights_.empty() && weights_.size() != grid_.size()) {
    fail_validation("spectrum weights differ in length from the grid");
  }
  if (grid_.empty()) fail_validation("spectrum is empty");
  for (std::size_t k = 0; k < grid_.size(); ++k) {
    if (!std::isfinite(grid_[k]) || !std::isfinite(values_[k])) {
      fail_validation("spectrum contains a non-finite value at index " +
                      std::to_string(k));
    }
    if (k > 0 && !(grid_[k] > grid_[k - 1])) {
      fail_validation("spectrum grid is not strictly ascending at index " +
                      std::to_string(k));
    }
  }
  for (double w : weights_) {
    if (!std::isfinite(w) || w < 0.0) fail_validation("spectrum weights must be finite and >= 0");
  }
  if (kind_ != SpectrumKind::experimental && !is_uniform(grid_)) {
    fail_validation("computed spectra require a uniform grid");
  }
  const double top = *std::max_element(values_.begin(), values_.end());
  const double floor = -kNegativityTol * std::max({top, reference_scale, 0.0});
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (values_[k] < floor) {
      fail_validation("spectrum value below numerical nonnegativity at index " +
                      std::to_string(k));
    }
  }
}

double SpectrumSeries::spacing() const {
  if (grid_.size() < 2) return 0.0;
  return (grid_.back() - grid_.front()) / static_cast<double>(grid_.size() - 1);
}

double SpectrumSeries::peak() const {
  return *std::max_element(values_.begin(), values_.end());
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t points) {
  if (points < 2 || !(hi > lo)) fail_validation("uniform_grid needs hi > lo and >= 2 points");
  std::vector<double> grid(points);
  const double h = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t k = 0; k < points; ++k) grid[k] = lo + h * static_cast<double>(k);
  grid.back() = hi;
  return grid;
}

double integrate(std::span<const double> grid, std::span<const double> values) {
  double sum = 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    sum += 0.5 * (grid[k] - grid[k - 1]) * (values[k] + values[k - 1]);
  }
  return sum;
}

double interpolate(std::span<const double> grid, std::span<const double> values,
                   double x) {
  if (grid.empty() || x < grid.front() || x > grid.back()) {
    fail_validation("interpolation point outside the grid");
  }
  auto it = std::upper_bound(grid.begin(), grid.end(), x);
  if (it == grid.end()) return values.back();
  const auto hi = static_cast<std::size_t>(it - grid.begin());
  if (hi == 0) return values.front();
  const std::size_t lo = hi - 1;
  const double t = (x - grid[lo]) / (grid[hi] - grid[lo]);
  return values[lo] + t * (values[hi] - values[lo]);
}

double asymmetry_functional(const SpectrumSeries& spectrum) {
  const auto& grid = spectrum.delta_grid();
  const auto& values = spectrum.values();
  const double reach = std::min(-grid.front(), grid.back());
  if (!(reach > 0.0)) fail_validation("asymmetry functional needs a grid spanning zero");
  std::vector<double> xs, diff, abs_values;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (std::abs(grid[k]) > reach) continue;
    xs.push_back(grid[k]);
    diff.push_back(std::abs(values[k] - interpolate(grid, values, -grid[k])));
    abs_values.push_back(values[k]);
  }
  const double total = integrate(xs, abs_values);
  if (!(total > 0.0)) return 0.0;
  return integrate(xs, diff) / total;
}

}  // namespace kerrsf
