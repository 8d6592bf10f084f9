#include "kerrsf/collective_sf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <unsupported/Eigen/KroneckerProduct>

#include "kerrsf/correlations.hpp"
#include "kerrsf/error.hpp"

namespace kerrsf {

namespace {

constexpr double kOracleTauStep = 0.05;    // 1/meV
constexpr double kOracleDecayTimes = 30.0;  // tau_max = 30 / gamma
constexpr double kRelaxDecayTimes = 60.0;
constexpr Eigen::Index kDirectSolveMaxSize = 5000;

SparseCMatrix sparse_identity(Eigen::Index n) {
  SparseCMatrix id(n, n);
  id.setIdentity();
  return id;
}

// a on factor `mode` of an n_modes-fold product, mode 0 leftmost.
SparseCMatrix embedded_annihilation(int mode, int n_modes, int d) {
  const SparseCMatrix a = annihilation(d).entries().sparseView();
  SparseCMatrix out = mode == 0 ? a : sparse_identity(d);
  for (int m = 1; m < n_modes; ++m) {
    const SparseCMatrix factor = m == mode ? a : sparse_identity(d);
    out = SparseCMatrix(Eigen::kroneckerProduct(out, factor));
  }
  return out;
}

Complex phase_sum(const MultiModeParams& params) {
  Complex sum = 0.0;
  for (double phi : params.phases) sum += std::polar(1.0, phi);
  return sum;
}

}  // namespace

long MultiModeParams::total_dim() const {
  long total = 1;
  for (int n = 0; n < n_modes; ++n) {
    total *= dim_per_mode;
    if (total > kMaxTotalDim) return total;
  }
  return total;
}

void MultiModeParams::validate() const {
  if (n_modes < 1) fail_validation("n_modes must be >= 1");
  if (dim_per_mode < 2) fail_validation("dim_per_mode must be >= 2");
  if (static_cast<int>(phases.size()) != n_modes) {
    fail_validation("phases must have exactly n_modes entries");
  }
  for (double v : {rabi_single, kerr_single, delta, gamma}) {
    if (!std::isfinite(v)) fail_validation("multi-mode parameters must be finite");
  }
  for (double phi : phases) {
    if (!std::isfinite(phi)) fail_validation("phases must be finite");
  }
  if (!(gamma > 0.0)) fail_validation("gamma must be > 0");
  if (rabi_single < 0.0) fail_validation("rabi_single must be >= 0");
  if (total_dim() > kMaxTotalDim) {
    throw Error(ErrorKind::scale_guard,
                "oracle scale guard: dim_per_mode^n_modes exceeds " +
                    std::to_string(kMaxTotalDim));
  }
}

CollectiveModelParams collective_reduce(const MultiModeParams& params) {
  params.validate();
  const double n = params.n_modes;
  CollectiveModelParams out;
  out.delta = params.delta;
  out.rabi = std::abs(phase_sum(params)) * params.rabi_single / std::sqrt(n);
  out.kerr = n * params.kerr_single;
  out.gamma = params.gamma;
  return out;
}

SparseCMatrix collective_annihilation(int n_modes, int dim_per_mode) {
  SparseCMatrix sum = embedded_annihilation(0, n_modes, dim_per_mode);
  for (int n = 1; n < n_modes; ++n) sum += embedded_annihilation(n, n_modes, dim_per_mode);
  return sum / std::sqrt(static_cast<double>(n_modes));
}

SparseCMatrix multimode_hamiltonian(const MultiModeParams& params) {
  params.validate();
  const int d = params.dim_per_mode;
  const Eigen::Index total = params.total_dim();
  SparseCMatrix h(total, total);
  SparseCMatrix number_total(total, total);
  for (int n = 0; n < params.n_modes; ++n) {
    const SparseCMatrix a = embedded_annihilation(n, params.n_modes, d);
    const SparseCMatrix ad = a.adjoint();
    const SparseCMatrix num = ad * a;
    const Complex drive = std::polar(params.rabi_single, params.phases[static_cast<std::size_t>(n)]);
    h += params.delta * num + drive * a + std::conj(drive) * ad;
    number_total += num;
  }
  // sum_{n,k} a_n^dag a_k^dag a_k a_n = N_tot (N_tot - 1)
  h += params.kerr_single * (number_total * number_total - number_total);
  h.prune(Complex(0.0));
  return h;
}

OracleResult oracle_multimode_steady(const MultiModeParams& params,
                                     std::span<const double> delta_grid) {
  params.validate();
  const int d = params.dim_per_mode;
  const int total = static_cast<int>(params.total_dim());

  const SparseCMatrix h = multimode_hamiltonian(params);
  std::vector<SparseCMatrix> jumps;
  for (int n = 0; n < params.n_modes; ++n) {
    jumps.push_back(std::sqrt(params.gamma) * embedded_annihilation(n, params.n_modes, d));
  }
  const SparseCMatrix generator = sparse_lindblad_generator(h, jumps);
  const DensityMatrix rho =
      generator.rows() <= kDirectSolveMaxSize
          ? steady_state(generator, total)
          : steady_state_by_relaxation(generator, total, kRelaxDecayTimes / params.gamma);

  OracleResult out;
  out.total_dim = total;
  out.top_population.assign(static_cast<std::size_t>(params.n_modes), 0.0);
  for (int idx = 0; idx < total; ++idx) {
    const double p = rho.entries()(idx, idx).real();
    int rest = idx;
    for (int n = params.n_modes - 1; n >= 0; --n) {
      if (rest % d == d - 1) out.top_population[static_cast<std::size_t>(n)] += p;
      rest /= d;
    }
  }
  for (int n = 0; n < params.n_modes; ++n) {
    const double top = out.top_population[static_cast<std::size_t>(n)];
    if (top > kTailTol) {
      fail_numerical("oracle truncation too small: mode " + std::to_string(n) +
                     " top-level population " + std::to_string(top) + " exceeds 1e-4");
    }
  }

  const CMatrix field = collective_annihilation(params.n_modes, d);
  out.mean_field = (field * rho.entries()).trace();
  out.occupation_collective = (field.adjoint() * field * rho.entries()).trace().real();
  if (!delta_grid.empty()) {
    // Sparse LU on the N-mode Liouvillian fills in badly, so the spectrum
    // comes from the propagated correlation function instead.
    double reach = 1.0;
    for (double x : delta_grid) reach = std::max(reach, std::abs(x));
    const double step = std::min(kOracleTauStep, 0.5 / reach);
    const double tau_max = kOracleDecayTimes / params.gamma;
    const auto points = static_cast<std::size_t>(std::ceil(tau_max / step)) + 1;
    std::vector<double> tau(points);
    for (std::size_t k = 0; k < points; ++k) tau[k] = step * static_cast<double>(k);
    const CorrelationSeries corr = two_time_correlation(generator, rho, tau, field);
    out.spectrum = SpectrumSeries(std::vector<double>(delta_grid.begin(), delta_grid.end()),
                                  time_domain_spectrum(corr, delta_grid),
                                  SpectrumKind::internal, {}, out.occupation_collective);
  }
  return out;
}

std::string_view to_string(SFClass c) {
  switch (c) {
    case SFClass::superfluorescent: return "superfluorescent";
    case SFClass::random_phase: return "random_phase";
    case SFClass::partial: return "partial";
  }
  return "unknown";
}

namespace {

void check_fit(const CollectiveModelParams& fit, const char* label) {
  const std::string name(label);
  if (!fit.laser_power) fail_validation(name + ": missing laser_power");
  if (!(*fit.laser_power > 0.0) || !std::isfinite(*fit.laser_power)) {
    fail_validation(name + ": laser_power must be > 0");
  }
  if (!(fit.rabi > 0.0) || !std::isfinite(fit.rabi)) fail_validation(name + ": rabi must be > 0");
  if (!(fit.kerr > 0.0) || !std::isfinite(fit.kerr)) fail_validation(name + ": kerr must be > 0");
}

}  // namespace

SFReport sf_ratio(const CollectiveModelParams& fit_1, const CollectiveModelParams& fit_2,
                  const SFThresholds& thresholds) {
  check_fit(fit_1, "fit 1");
  check_fit(fit_2, "fit 2");
  SFReport r;
  r.power_1 = *fit_1.laser_power;
  r.power_2 = *fit_2.laser_power;
  r.rabi_1 = fit_1.rabi;
  r.rabi_2 = fit_2.rabi;
  r.kerr_1 = fit_1.kerr;
  r.kerr_2 = fit_2.kerr;
  const double rabi_ratio = r.rabi_2 / r.rabi_1;
  r.lhs = (r.power_1 / r.power_2) * rabi_ratio * rabi_ratio;
  r.kerr_ratio = r.kerr_2 / r.kerr_1;
  r.agreement = std::abs(r.lhs - r.kerr_ratio) / r.kerr_ratio;
  if (r.agreement < thresholds.threshold_sf && r.lhs > 1.0 + thresholds.margin) {
    r.classification = SFClass::superfluorescent;
  } else if (std::abs(r.lhs - 1.0) < thresholds.margin) {
    r.classification = SFClass::random_phase;
  } else {
    r.classification = SFClass::partial;
  }
  return r;
}

std::vector<SFReport> sf_sequence(std::vector<CollectiveModelParams> fits,
                                  const SFThresholds& thresholds) {
  if (fits.size() < 2) fail_validation("sf test needs at least two fits");
  for (const auto& fit : fits) {
    if (!fit.laser_power) fail_validation("fit without laser_power metadata");
  }
  std::stable_sort(fits.begin(), fits.end(), [](const auto& a, const auto& b) {
    return *a.laser_power < *b.laser_power;
  });
  std::vector<SFReport> out;
  for (std::size_t k = 1; k < fits.size(); ++k) {
    out.push_back(sf_ratio(fits[k - 1], fits[k], thresholds));
  }
  return out;
}

SFClass sf_verdict(std::span<const SFReport> reports) {
  if (reports.empty()) fail_validation("no SF reports to summarize");
  const auto all = [&](SFClass c) {
    return std::all_of(reports.begin(), reports.end(),
                       [c](const SFReport& r) { return r.classification == c; });
  };
  if (all(SFClass::superfluorescent)) return SFClass::superfluorescent;
  if (all(SFClass::random_phase)) return SFClass::random_phase;
  return SFClass::partial;
}

double random_phase_enhancement(int n_modes, int draws, std::uint64_t seed) {
  if (n_modes < 1 || draws < 1) fail_validation("random phases need n_modes, draws >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  double total = 0.0;
  for (int k = 0; k < draws; ++k) {
    Complex sum = 0.0;
    for (int n = 0; n < n_modes; ++n) sum += std::polar(1.0, phase(rng));
    total += std::norm(sum) / n_modes;
  }
  return total / draws;
}

}  // namespace kerrsf
