#include "kerrsf/correlations.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "kerrsf/error.hpp"
#include "kerrsf/kernels.hpp"

namespace kerrsf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kGridTooShortTol = 1e-6;
constexpr double kDeflationShift = 1.0;  // meV; moves the stationary eigenvalue to -1

void require_uniform_grid(std::span<const double> grid) {
  if (grid.size() < 2) fail_validation("spectrum grid needs at least two points");
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k] > grid[k - 1])) fail_validation("spectrum grid must be strictly ascending");
  }
  if (!is_uniform(grid)) fail_validation("spectrum grid must be uniform");
}

std::vector<double> negated(std::span<const double> grid) {
  std::vector<double> out(grid.size());
  std::transform(grid.begin(), grid.end(), out.begin(), [](double x) { return -x; });
  return out;
}

// Terms for the two halves of the stationary transform:
//   tau > 0: Tr[a e^{L tau}(rho a^dag - <a^dag> rho)]
//   tau < 0: Tr[a^dag e^{L |tau|}(a rho - <a> rho)]
struct TransformTerms {
  ResolventTerm positive;
  ResolventTerm negative;
  Complex mean_field;
  double occupation = 0.0;
};

TransformTerms make_terms(const CMatrix& field, const CMatrix& rho) {
  TransformTerms terms;
  terms.mean_field = (field * rho).trace();
  terms.occupation = (field.adjoint() * field * rho).trace().real();
  const Complex mean = terms.mean_field;
  terms.positive.left = trace_functional(field);
  terms.positive.right = vectorize(rho * field.adjoint() - std::conj(mean) * rho);
  terms.negative.left = trace_functional(CMatrix(field.adjoint()));
  terms.negative.right = vectorize(field * rho - mean * rho);
  return terms;
}

IncoherentSpectrum assemble(std::span<const double> delta_grid, const CVector& positive,
                            const CVector& negative, const TransformTerms& terms) {
  // int_0^inf e^{(G - iD) tau} dtau = -(G - iD)^{-1} on the decaying subspace
  std::vector<double> values(delta_grid.size());
  double peak = 0.0;
  double residue = 0.0;
  for (std::size_t k = 0; k < delta_grid.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    const Complex full = -(positive(row) + negative(row));
    values[k] = full.real();
    peak = std::max(peak, std::abs(full.real()));
    residue = std::max(residue, std::abs(full.imag()));
  }
  IncoherentSpectrum out{
      SpectrumSeries(std::vector<double>(delta_grid.begin(), delta_grid.end()),
                     std::move(values), SpectrumKind::internal, {}, terms.occupation),
      terms.mean_field, terms.occupation, peak > 0.0 ? residue / peak : residue};
  return out;
}

// The positive half needs shift +D_k and the negative half -D_k. Both are
// evaluated on the merged shift set so that, on grids symmetric about zero,
// every factorization serves both terms.
template <class Evaluate>
std::pair<CVector, CVector> two_sided(std::span<const double> delta_grid,
                                      const TransformTerms& terms, Evaluate&& evaluate) {
  std::vector<double> shifts(delta_grid.begin(), delta_grid.end());
  const std::vector<double> mirrored = negated(delta_grid);
  shifts.insert(shifts.end(), mirrored.begin(), mirrored.end());
  std::sort(shifts.begin(), shifts.end());
  const double h = (delta_grid.back() - delta_grid.front()) /
                   static_cast<double>(delta_grid.size() - 1);
  const double tol = 1e-9 * h;
  std::vector<double> merged;
  for (double x : shifts) {
    if (merged.empty() || x - merged.back() > tol) merged.push_back(x);
  }
  const auto locate = [&](double x) {
    auto it = std::lower_bound(merged.begin(), merged.end(), x - tol);
    return static_cast<Eigen::Index>(it - merged.begin());
  };
  const std::array<ResolventTerm, 2> both{terms.positive, terms.negative};
  const CMatrix values = evaluate(std::span<const double>(merged), std::span(both));
  CVector positive(static_cast<Eigen::Index>(delta_grid.size()));
  CVector negative(static_cast<Eigen::Index>(delta_grid.size()));
  for (std::size_t k = 0; k < delta_grid.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    positive(row) = values(locate(delta_grid[k]), 0);
    negative(row) = values(locate(-delta_grid[k]), 1);
  }
  return {positive, negative};
}

// [[G, vec(rho)], [t^T, 0]]. For traceless right-hand sides the bordered
// solve returns x = (G - z)^{-1} v with t.x = 0 and a vanishing multiplier,
// including at z = 0 where G itself is singular. Unlike the rank-one
// deflation this adds a single column and row, so the LU fill stays sparse.
SparseCMatrix bordered(const SparseCMatrix& generator, const DensityMatrix& rho_ss) {
  const int dim = rho_ss.dim();
  const Eigen::Index n = generator.rows();
  std::vector<Eigen::Triplet<Complex>> triplets;
  triplets.reserve(static_cast<std::size_t>(generator.nonZeros() + n + dim));
  for (Eigen::Index col = 0; col < generator.outerSize(); ++col) {
    for (SparseCMatrix::InnerIterator it(generator, col); it; ++it) {
      triplets.emplace_back(it.row(), it.col(), it.value());
    }
  }
  const CVector rho_vec = vectorize(rho_ss.entries());
  for (Eigen::Index r = 0; r < n; ++r) {
    if (rho_vec(r) != Complex(0.0)) triplets.emplace_back(r, n, rho_vec(r));
  }
  for (int i = 0; i < dim; ++i) {
    triplets.emplace_back(n, i + static_cast<Eigen::Index>(dim) * i, 1.0);
  }
  SparseCMatrix out(n + 1, n + 1);
  out.setFromTriplets(triplets.begin(), triplets.end());
  out.makeCompressed();
  return out;
}

ResolventTerm padded(const ResolventTerm& term) {
  ResolventTerm out;
  out.left = CVector::Zero(term.left.size() + 1);
  out.right = CVector::Zero(term.right.size() + 1);
  out.left.head(term.left.size()) = term.left;
  out.right.head(term.right.size()) = term.right;
  return out;
}

IncoherentSpectrum sparse_incoherent(const SparseCMatrix& generator,
                                     const DensityMatrix& rho_ss,
                                     std::span<const double> delta_grid,
                                     const TransformTerms& terms) {
  TransformTerms extended = terms;
  extended.positive = padded(terms.positive);
  extended.negative = padded(terms.negative);
  const SparseCMatrix system = bordered(generator, rho_ss);
  const auto halves = two_sided(delta_grid, extended, [&](auto shifts, auto both) {
    return sparse_resolvent(system, shifts, both, generator.rows());
  });
  return assemble(delta_grid, halves.first, halves.second, terms);
}

}  // namespace

CorrelationSeries two_time_correlation(const Liouvillian& liouvillian,
                                       const DensityMatrix& rho_ss,
                                       std::span<const double> tau_grid) {
  return two_time_correlation(liouvillian, rho_ss, tau_grid,
                              annihilation(liouvillian.dim()).entries());
}

CorrelationSeries two_time_correlation(const Liouvillian& liouvillian,
                                       const DensityMatrix& rho_ss,
                                       std::span<const double> tau_grid,
                                       const CMatrix& field) {
  if (tau_grid.empty() || tau_grid.front() != 0.0) {
    fail_validation("tau grid must start at 0");
  }
  for (std::size_t k = 1; k < tau_grid.size(); ++k) {
    if (!(tau_grid[k] > tau_grid[k - 1])) fail_validation("tau grid must be ascending");
  }
  if (rho_ss.dim() != liouvillian.dim() || field.rows() != liouvillian.dim()) {
    fail_validation("correlation: dimension mismatch");
  }
  const CMatrix& rho = rho_ss.entries();
  CorrelationSeries series;
  series.tau_grid.assign(tau_grid.begin(), tau_grid.end());
  series.mean_field = (field * rho).trace();

  const CVector readout = trace_functional(field);
  CVector state = vectorize(rho * field.adjoint());
  series.values.reserve(tau_grid.size());
  series.values.push_back(readout.transpose() * state);

  const bool uniform = tau_grid.size() > 2 && is_uniform(tau_grid);
  if (uniform) {
    const StepPropagator step(liouvillian, tau_grid[1] - tau_grid[0]);
    for (std::size_t k = 1; k < tau_grid.size(); ++k) {
      state = step.advance(state);
      series.values.push_back(readout.transpose() * state);
    }
  } else {
    for (std::size_t k = 1; k < tau_grid.size(); ++k) {
      const CMatrix next = propagate(liouvillian, unvectorize(state, liouvillian.dim()),
                                     tau_grid[k] - tau_grid[k - 1]);
      state = vectorize(next);
      series.values.push_back(readout.transpose() * state);
    }
  }

  const double c0 = std::abs(series.values.front());
  const double tail = std::abs(series.values.back() - series.coherent_level());
  if (tail > kGridTooShortTol * c0) {
    fail_numerical("tau grid too short: |C(tau_max) - |<a>|^2| = " +
                   std::to_string(tail) + " exceeds 1e-6 C(0)");
  }
  return series;
}

CorrelationSeries two_time_correlation(const SparseCMatrix& generator,
                                       const DensityMatrix& rho_ss,
                                       std::span<const double> tau_grid,
                                       const CMatrix& field) {
  if (tau_grid.empty() || tau_grid.front() != 0.0) {
    fail_validation("tau grid must start at 0");
  }
  const int dim = rho_ss.dim();
  if (generator.rows() != static_cast<Eigen::Index>(dim) * dim || field.rows() != dim) {
    fail_validation("correlation: dimension mismatch");
  }
  const CMatrix& rho = rho_ss.entries();
  CorrelationSeries series;
  series.tau_grid.assign(tau_grid.begin(), tau_grid.end());
  series.mean_field = (field * rho).trace();
  series.values.resize(tau_grid.size());

  const CVector readout = trace_functional(field);
  const CVector start = vectorize(rho * field.adjoint());
  series.initial_slope = readout.transpose() * (generator * start);
  propagate_observe(generator, start, tau_grid, [&](std::size_t k, const CVector& state) {
    series.values[k] = readout.transpose() * state;
  });

  const double c0 = std::abs(series.values.front());
  const double tail = std::abs(series.values.back() - series.coherent_level());
  if (tail > kGridTooShortTol * c0) {
    fail_numerical("tau grid too short: |C(tau_max) - |<a>|^2| = " +
                   std::to_string(tail) + " exceeds 1e-6 C(0)");
  }
  return series;
}

std::vector<double> time_domain_spectrum(const CorrelationSeries& correlation,
                                         std::span<const double> delta_grid) {
  const auto& tau = correlation.tau_grid;
  const double level = correlation.coherent_level();
  std::vector<Complex> fluct(tau.size());
  for (std::size_t k = 0; k < tau.size(); ++k) fluct[k] = correlation.values[k] - level;

  // Euler-Maclaurin: int_0^T g = T_h(g) - h^2/12 (g'(T) - g'(0)) + O(h^4); the
  // integrand has decayed at T, and g'(0) = C'(0+) - i D (C(0) - |<a>|^2).
  const bool corrected = correlation.initial_slope.has_value() && tau.size() > 2 &&
                         is_uniform(tau);
  const double step = tau.size() > 1 ? tau[1] - tau[0] : 0.0;

  std::vector<double> out(delta_grid.size());
  const auto count = static_cast<std::ptrdiff_t>(delta_grid.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const double delta = delta_grid[static_cast<std::size_t>(i)];
    Complex sum = 0.0;
    for (std::size_t k = 1; k < tau.size(); ++k) {
      const double h = tau[k] - tau[k - 1];
      sum += 0.5 * h *
             (std::polar(1.0, -delta * tau[k - 1]) * fluct[k - 1] +
              std::polar(1.0, -delta * tau[k]) * fluct[k]);
    }
    if (corrected) {
      const Complex slope = *correlation.initial_slope - Complex(0.0, delta) * fluct[0];
      sum += step * step / 12.0 * slope;
    }
    out[static_cast<std::size_t>(i)] = 2.0 * sum.real();
  }
  return out;
}

CMatrix deflated_generator(const Liouvillian& liouvillian, const DensityMatrix& rho_ss) {
  CMatrix gen = liouvillian.generator();
  gen.noalias() -= kDeflationShift * vectorize(rho_ss.entries()) *
                   trace_functional(liouvillian.dim()).transpose();
  return gen;
}

IncoherentSpectrum incoherent_spectrum_detailed(const Liouvillian& liouvillian,
                                                const DensityMatrix& rho_ss,
                                                std::span<const double> delta_grid,
                                                const CMatrix& field,
                                                ResolventBackend backend) {
  require_uniform_grid(delta_grid);
  if (rho_ss.dim() != liouvillian.dim() || field.rows() != liouvillian.dim()) {
    fail_validation("incoherent spectrum: dimension mismatch");
  }
  if (backend == ResolventBackend::automatic) {
    backend = liouvillian.dim() <= kSchurMaxDim ? ResolventBackend::schur_parallel
                                                : ResolventBackend::sparse;
  }
  const TransformTerms terms = make_terms(field, rho_ss.entries());
  std::pair<CVector, CVector> halves;
  switch (backend) {
    case ResolventBackend::schur_parallel: {
      const ShiftedResolvent resolvent(deflated_generator(liouvillian, rho_ss));
      halves = two_sided(delta_grid, terms, [&](auto shifts, auto both) {
        return resolvent.evaluate(shifts, both);
      });
      break;
    }
    case ResolventBackend::dense_reference: {
      const CMatrix gen = deflated_generator(liouvillian, rho_ss);
      halves = two_sided(delta_grid, terms, [&](auto shifts, auto both) {
        return resolvent_reference(gen, shifts, both);
      });
      break;
    }
    case ResolventBackend::sparse:
    case ResolventBackend::automatic:
      return sparse_incoherent(liouvillian.generator().sparseView(), rho_ss, delta_grid,
                               terms);
  }
  return assemble(delta_grid, halves.first, halves.second, terms);
}

IncoherentSpectrum incoherent_spectrum_detailed(const SparseCMatrix& generator,
                                                const DensityMatrix& rho_ss,
                                                std::span<const double> delta_grid,
                                                const CMatrix& field) {
  require_uniform_grid(delta_grid);
  const int dim = rho_ss.dim();
  if (generator.rows() != static_cast<Eigen::Index>(dim) * dim || field.rows() != dim) {
    fail_validation("incoherent spectrum: dimension mismatch");
  }
  return sparse_incoherent(generator, rho_ss, delta_grid,
                           make_terms(field, rho_ss.entries()));
}

SpectrumSeries incoherent_spectrum(const Liouvillian& liouvillian,
                                   const DensityMatrix& rho_ss,
                                   std::span<const double> delta_grid) {
  return incoherent_spectrum_detailed(liouvillian, rho_ss, delta_grid,
                                      annihilation(liouvillian.dim()).entries())
      .spectrum;
}

InternalSpectrum with_rayleigh(const IncoherentSpectrum& inc, double gamma_f,
                               bool full_convolution) {
  if (!(gamma_f > 0.0)) fail_validation("detector width gamma_f must be > 0");
  const std::vector<double>& grid = inc.spectrum.delta_grid();
  std::vector<double> broad = inc.spectrum.values();
  if (full_convolution) broad = lorentzian_convolve(grid, broad, gamma_f);

  const double weight = kTwoPi * std::norm(inc.mean_field);
  std::vector<double> total(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    total[k] = broad[k] + weight * lorentzian(grid[k], gamma_f);
  }
  SpectrumSeries incoherent(grid, std::move(broad), SpectrumKind::internal, {},
                            inc.occupation);
  SpectrumSeries total_series(grid, std::move(total), SpectrumKind::internal, {},
                              inc.occupation);
  return InternalSpectrum{std::move(incoherent), std::move(total_series), inc.mean_field,
                          inc.occupation, weight, inc.max_imaginary_residue};
}

InternalSpectrum internal_spectrum(const Liouvillian& liouvillian,
                                   const DensityMatrix& rho_ss,
                                   std::span<const double> delta_grid, double gamma_f,
                                   bool full_convolution) {
  if (!(gamma_f > 0.0)) fail_validation("detector width gamma_f must be > 0");
  return with_rayleigh(
      incoherent_spectrum_detailed(liouvillian, rho_ss, delta_grid,
                                   annihilation(liouvillian.dim()).entries()),
      gamma_f, full_convolution);
}

InternalSpectrum internal_spectrum(const CollectiveModelParams& params,
                                   std::span<const double> delta_grid, double gamma_f,
                                   bool full_convolution) {
  params.validate();
  if (!(gamma_f > 0.0)) fail_validation("detector width gamma_f must be > 0");
  const CMatrix field = annihilation(params.fock_dim).entries();
  if (params.fock_dim <= kSchurMaxDim) {
    const Liouvillian liouvillian = build_liouvillian(params);
    const DensityMatrix rho = steady_state(liouvillian);
    return with_rayleigh(incoherent_spectrum_detailed(liouvillian, rho, delta_grid, field,
                                                      ResolventBackend::schur_parallel),
                         gamma_f, full_convolution);
  }
  const SparseCMatrix generator = build_sparse_generator(params);
  const DensityMatrix rho = steady_state(generator, params.fock_dim);
  return with_rayleigh(incoherent_spectrum_detailed(generator, rho, delta_grid, field),
                       gamma_f, full_convolution);
}

SpectrumSeries internal_spectrum_with_rayleigh(const Liouvillian& liouvillian,
                                               const DensityMatrix& rho_ss,
                                               std::span<const double> delta_grid,
                                               double gamma_f) {
  return internal_spectrum(liouvillian, rho_ss, delta_grid, gamma_f).total;
}

}  // namespace kerrsf
