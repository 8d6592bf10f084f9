#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kerrsf/dynamics.hpp"
#include "kerrsf/spectrum.hpp"

namespace kerrsf {

/// N bosonic exciton modes with a common drive of phase phi_n, a number-
/// conserving Kerr term G sum_{n,k} a_n^dag a_k^dag a_k a_n and independent
/// radiative decay gamma. Each mode is truncated to dim_per_mode levels.
struct MultiModeParams {
  static constexpr long kMaxTotalDim = 4096;

  int n_modes = 1;
  double rabi_single = 0.0;  // |Omega_R|
  std::vector<double> phases{0.0};
  double kerr_single = 0.0;
  double delta = 0.0;
  double gamma = 1.0;
  int dim_per_mode = 4;

  /// Validation errors for bad values; ErrorKind::scale_guard when
  /// dim_per_mode^n_modes exceeds kMaxTotalDim.
  void validate() const;
  long total_dim() const;
};

/// Collective parameters: rabi = |sum_n e^{i phi_n}| |Omega_R| / sqrt(N),
/// kerr = N G.
CollectiveModelParams collective_reduce(const MultiModeParams& params);

/// Hamiltonian of the N-mode model on the product space (mode 0 is the most
/// significant tensor factor).
SparseCMatrix multimode_hamiltonian(const MultiModeParams& params);

/// Collective annihilation operator A = N^{-1/2} sum_n a_n.
SparseCMatrix collective_annihilation(int n_modes, int dim_per_mode);

struct OracleResult {
  double occupation_collective = 0.0;  // <A^dag A>_ss
  Complex mean_field;                  // <A>_ss
  std::vector<double> top_population;  // per mode, population of level d-1
  std::optional<SpectrumSeries> spectrum;  // incoherent A-spectrum when a grid is given
  long total_dim = 0;
};

/// Brute-force steady state of the N-mode master equation. Throws a numerical
/// error when any mode's top-level population exceeds kTailTol. The spectrum
/// is the time-domain transform of the propagated A-correlation (tau step
/// <= 0.05/meV, tau_max = 30/gamma).
OracleResult oracle_multimode_steady(const MultiModeParams& params,
                                     std::span<const double> delta_grid = {});

inline constexpr double kTailTol = 1e-4;

enum class SFClass { superfluorescent, random_phase, partial };

std::string_view to_string(SFClass c);

struct SFThresholds {
  double margin = 0.15;
  double threshold_sf = 0.25;
};

struct SFReport {
  double power_1 = 0.0, power_2 = 0.0;
  double rabi_1 = 0.0, rabi_2 = 0.0;
  double kerr_1 = 0.0, kerr_2 = 0.0;
  double lhs = 0.0;         // (P1/P2)(rabi_2/rabi_1)^2
  double kerr_ratio = 0.0;  // kerr_2/kerr_1
  double agreement = 0.0;   // |lhs - kerr_ratio| / kerr_ratio
  SFClass classification = SFClass::partial;
};

/// Both fits need laser_power, rabi and kerr > 0 (validation error otherwise).
SFReport sf_ratio(const CollectiveModelParams& fit_1, const CollectiveModelParams& fit_2,
                  const SFThresholds& thresholds = {});

/// Reports for consecutive pairs after sorting by ascending power.
std::vector<SFReport> sf_sequence(std::vector<CollectiveModelParams> fits,
                                  const SFThresholds& thresholds = {});

/// superfluorescent (resp. random_phase) if every pair is; partial otherwise.
SFClass sf_verdict(std::span<const SFReport> reports);

/// Sample mean of |sum_n e^{i phi_n}|^2 / N over `draws` sets of N uniform
/// phases, i.e. the mean of (rabi'/|Omega_R|)^2 for random phases.
double random_phase_enhancement(int n_modes, int draws, std::uint64_t seed);

}  // namespace kerrsf
