#pragma once

#include <span>
#include <string_view>

#include "kerrsf/fock_space.hpp"
#include "kerrsf/spectrum.hpp"

namespace kerrsf {

enum class AbsorptionMode { thin_film_proportional, slab };

std::string_view to_string(AbsorptionMode mode);
AbsorptionMode absorption_mode_from_string(std::string_view name);

/// Single Lorentz oscillator sharing resonance and width with the exciton.
struct MediumParams {
  double f = 1.0;          // oscillator strength, a.u.
  double delta_res = 0.0;  // meV, resonance minus laser
  double gamma = 1.0;      // meV
  AbsorptionMode mode = AbsorptionMode::thin_film_proportional;
  double slab_phase_thickness = 0.1;  // slab mode only
  double a_max = 0.9;                 // thin-film mode only
  double background = 0.0;
  double scale = 1.0;

  void validate() const;
};

/// chi(D) = f / (D - delta_res - i gamma/2).
Complex susceptibility(double delta, const MediumParams& medium);

/// Thin-film mode: a_max Im chi(D) / Im chi(delta_res).
/// Slab mode: xi = thickness chi, r = i xi / (1 - i xi), t = 1 + r,
/// a = 1 - |t|^2 - |r|^2; a numerical error if a leaves [0, 1] by > 1e-10.
double absorption_at(double delta, const MediumParams& medium);

SpectrumSeries absorption(std::span<const double> delta_grid, const MediumParams& medium);

/// S(D) = scale a(D) S_W(D) + background, pointwise. `internal` must be of
/// kind internal; the absorption is evaluated on its grid.
SpectrumSeries output_spectrum(const SpectrumSeries& internal, const MediumParams& medium);

/// Same, with a precomputed absorption series (grids must match exactly).
SpectrumSeries output_spectrum(const SpectrumSeries& internal,
                               const SpectrumSeries& absorption,
                               const MediumParams& medium);

}  // namespace kerrsf
