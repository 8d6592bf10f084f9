#include "kerrsf/medium_optics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kerrsf/error.hpp"

namespace kerrsf {

namespace {

constexpr double kSlabRangeTol = 1e-10;

}  // namespace

std::string_view to_string(AbsorptionMode mode) {
  switch (mode) {
    case AbsorptionMode::thin_film_proportional: return "thin_film_proportional";
    case AbsorptionMode::slab: return "slab";
  }
  return "unknown";
}

AbsorptionMode absorption_mode_from_string(std::string_view name) {
  if (name == "thin_film_proportional" || name == "thin_film") {
    return AbsorptionMode::thin_film_proportional;
  }
  if (name == "slab") return AbsorptionMode::slab;
  fail_validation("unknown absorption mode '" + std::string(name) + "'");
}

void MediumParams::validate() const {
  for (double v : {f, delta_res, gamma, slab_phase_thickness, a_max, background, scale}) {
    if (!std::isfinite(v)) fail_validation("medium parameters must be finite");
  }
  if (!(gamma > 0.0)) fail_validation("medium gamma must be > 0");
  if (f < 0.0) fail_validation("oscillator strength f must be >= 0");
  if (!(a_max > 0.0 && a_max <= 1.0)) fail_validation("a_max must lie in (0, 1]");
  if (background < 0.0) fail_validation("background must be >= 0");
  if (!(scale > 0.0)) fail_validation("scale must be > 0");
  if (slab_phase_thickness < 0.0) fail_validation("slab_phase_thickness must be >= 0");
}

Complex susceptibility(double delta, const MediumParams& medium) {
  return medium.f / Complex(delta - medium.delta_res, -0.5 * medium.gamma);
}

double absorption_at(double delta, const MediumParams& medium) {
  if (medium.f == 0.0) return 0.0;
  if (medium.mode == AbsorptionMode::thin_film_proportional) {
    const double peak = susceptibility(medium.delta_res, medium).imag();
    return medium.a_max * susceptibility(delta, medium).imag() / peak;
  }
  const Complex i{0.0, 1.0};
  const Complex xi = medium.slab_phase_thickness * susceptibility(delta, medium);
  const Complex r = i * xi / (1.0 - i * xi);
  const Complex t = 1.0 + r;
  const double a = 1.0 - std::norm(t) - std::norm(r);
  if (a < -kSlabRangeTol || a > 1.0 + kSlabRangeTol) {
    fail_numerical("slab absorption " + std::to_string(a) + " outside [0, 1] at detuning " +
                   std::to_string(delta) + " meV");
  }
  return a;
}

SpectrumSeries absorption(std::span<const double> delta_grid, const MediumParams& medium) {
  medium.validate();
  std::vector<double> values(delta_grid.size());
  const auto count = static_cast<std::ptrdiff_t>(delta_grid.size());
  // absorption_at only throws in slab mode; evaluate serially there so the
  // exception leaves the loop cleanly.
  if (medium.mode == AbsorptionMode::slab) {
    for (std::ptrdiff_t k = 0; k < count; ++k) {
      values[static_cast<std::size_t>(k)] =
          absorption_at(delta_grid[static_cast<std::size_t>(k)], medium);
    }
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < count; ++k) {
      values[static_cast<std::size_t>(k)] =
          absorption_at(delta_grid[static_cast<std::size_t>(k)], medium);
    }
  }
  return SpectrumSeries(std::vector<double>(delta_grid.begin(), delta_grid.end()),
                        std::move(values), SpectrumKind::absorption, {}, 1.0);
}

SpectrumSeries output_spectrum(const SpectrumSeries& internal, const MediumParams& medium) {
  return output_spectrum(internal, absorption(internal.delta_grid(), medium), medium);
}

SpectrumSeries output_spectrum(const SpectrumSeries& internal,
                               const SpectrumSeries& absorption,
                               const MediumParams& medium) {
  medium.validate();
  if (internal.kind() != SpectrumKind::internal) {
    fail_validation("output_spectrum needs an internal spectrum");
  }
  if (absorption.delta_grid() != internal.delta_grid()) {
    fail_validation("absorption and internal spectrum grids differ");
  }
  const auto& s = internal.values();
  const auto& a = absorption.values();
  std::vector<double> out(s.size());
  const auto count = static_cast<std::ptrdiff_t>(s.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < count; ++k) {
    const auto i = static_cast<std::size_t>(k);
    out[i] = medium.scale * a[i] * s[i] + medium.background;
  }
  double reference = 0.0;
  for (double v : s) reference = std::max(reference, std::abs(v));
  return SpectrumSeries(internal.delta_grid(), std::move(out), SpectrumKind::output, {},
                        medium.scale * reference + medium.background);
}

}  // namespace kerrsf
