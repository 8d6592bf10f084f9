#pragma once

#include <optional>
#include <span>
#include <vector>

#include "kerrsf/dynamics.hpp"
#include "kerrsf/spectrum.hpp"

namespace kerrsf {

/// Stationary two-time correlation C(tau) = <a^dag(0) a(tau)>.
struct CorrelationSeries {
  std::vector<double> tau_grid;  // 1/meV, ascending from 0
  std::vector<Complex> values;
  Complex mean_field;            // <a>_ss
  std::optional<Complex> initial_slope;  // dC/dtau at 0+, when known exactly

  double coherent_level() const { return std::norm(mean_field); }
};

/// Quantum-regression evaluation C(tau) = Tr[a e^{L tau}(rho a^dag)].
/// Throws a numerical error ("grid too short") when |C(tau_max) - |<a>|^2|
/// exceeds 1e-6 C(0).
CorrelationSeries two_time_correlation(const Liouvillian& liouvillian,
                                       const DensityMatrix& rho_ss,
                                       std::span<const double> tau_grid);
CorrelationSeries two_time_correlation(const Liouvillian& liouvillian,
                                       const DensityMatrix& rho_ss,
                                       std::span<const double> tau_grid,
                                       const CMatrix& field);

/// Sparse route for large generators (multi-mode oracle): adaptive
/// Dormand-Prince propagation instead of a dense step map. Also records the
/// exact initial slope Tr[field G(rho field^dag)].
CorrelationSeries two_time_correlation(const SparseCMatrix& generator,
                                       const DensityMatrix& rho_ss,
                                       std::span<const double> tau_grid,
                                       const CMatrix& field);

/// 2 Re sum_k trapezoid e^{-i D tau}(C(tau) - |<a>|^2) on the correlation's own
/// tau grid. Independent of the resolvent path. On a uniform tau grid with a
/// known initial slope the Euler-Maclaurin endpoint term at tau = 0 is added,
/// making the rule fourth order.
std::vector<double> time_domain_spectrum(const CorrelationSeries& correlation,
                                         std::span<const double> delta_grid);

/// automatic: Schur for D <= kSchurMaxDim, sparse LU per shift above.
enum class ResolventBackend { automatic, schur_parallel, dense_reference, sparse };

inline constexpr int kSchurMaxDim = 12;

struct IncoherentSpectrum {
  SpectrumSeries spectrum;
  Complex mean_field;
  double occupation = 0.0;             // <a^dag a>_ss
  double max_imaginary_residue = 0.0;  // of the two-sided transform, before discarding
};

/// Rayleigh-free part of the Wiener-Khintchine spectrum via the resolvent:
/// S_inc(D) = 2 Re int_0^inf dtau e^{-i D tau} [C(tau) - |<a>|^2].
/// The field defaults to the annihilation operator of the Liouvillian's mode.
IncoherentSpectrum incoherent_spectrum_detailed(
    const Liouvillian& liouvillian, const DensityMatrix& rho_ss,
    std::span<const double> delta_grid, const CMatrix& field,
    ResolventBackend backend = ResolventBackend::automatic);

IncoherentSpectrum incoherent_spectrum_detailed(
    const SparseCMatrix& generator, const DensityMatrix& rho_ss,
    std::span<const double> delta_grid, const CMatrix& field);

SpectrumSeries incoherent_spectrum(const Liouvillian& liouvillian,
                                   const DensityMatrix& rho_ss,
                                   std::span<const double> delta_grid);

struct InternalSpectrum {
  SpectrumSeries incoherent;  // S_inc, kind=internal
  SpectrumSeries total;       // S_W = S_inc + Rayleigh line, kind=internal
  Complex mean_field;
  double occupation = 0.0;
  double rayleigh_weight = 0.0;  // 2 pi |<a>|^2, the area under the Rayleigh line
  double max_imaginary_residue = 0.0;
};

/// S_W(D) = S_inc(D) + 2 pi |<a>|^2 Lor(D; gamma_f). The Rayleigh delta is
/// replaced by a unit-area Lorentzian of FWHM gamma_f (detector resolution);
/// with full_convolution the incoherent part is convolved with it as well.
InternalSpectrum internal_spectrum(const Liouvillian& liouvillian,
                                   const DensityMatrix& rho_ss,
                                   std::span<const double> delta_grid, double gamma_f,
                                   bool full_convolution = false);

/// Full pipeline from parameters: steady state and resolvent at
/// params.fock_dim, sparse throughout when D > kSchurMaxDim.
InternalSpectrum internal_spectrum(const CollectiveModelParams& params,
                                   std::span<const double> delta_grid, double gamma_f,
                                   bool full_convolution = false);

/// Adds the Rayleigh line (and optionally the detector convolution) to an
/// incoherent spectrum.
InternalSpectrum with_rayleigh(const IncoherentSpectrum& incoherent, double gamma_f,
                               bool full_convolution = false);

SpectrumSeries internal_spectrum_with_rayleigh(const Liouvillian& liouvillian,
                                               const DensityMatrix& rho_ss,
                                               std::span<const double> delta_grid,
                                               double gamma_f);

/// Deflated generator L - vec(rho) t^T; agrees with L on traceless operators
/// and is regular at zero shift.
CMatrix deflated_generator(const Liouvillian& liouvillian, const DensityMatrix& rho_ss);

}  // namespace kerrsf
