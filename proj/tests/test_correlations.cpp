#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kerrsf/correlations.hpp"
#include "kerrsf/error.hpp"
#include "kerrsf/kernels.hpp"
#include "oracles.hpp"

using namespace kerrsf;

namespace {

CollectiveModelParams make(double delta, double rabi, double kerr, double gamma, int dim) {
  CollectiveModelParams p;
  p.delta = delta;
  p.rabi = rabi;
  p.kerr = kerr;
  p.gamma = gamma;
  p.fock_dim = dim;
  return p;
}

CollectiveModelParams fig3(int dim) { return make(0.1, 0.16, 0.45, 0.22, dim); }

std::vector<double> taus(double step, double tmax) {
  return uniform_grid(0.0, tmax, static_cast<std::size_t>(std::lround(tmax / step)) + 1);
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("two-time correlation") {
  SUBCASE("equal-time value and stationarity bound") {
    const auto l = build_liouvillian(fig3(12));
    const auto rho = steady_state(l);
    const auto tau = taus(0.1, 150.0);
    const auto c = two_time_correlation(l, rho, tau);
    const double occ = expectation(number(12), rho).real();
    CHECK(std::abs(c.values[0].imag()) < 1e-10);
    CHECK(c.values[0].real() == doctest::Approx(occ).epsilon(1e-8));
    for (const auto& v : c.values) CHECK(std::abs(v) <= c.values[0].real() + 1e-8);
    CHECK(std::abs(c.values.back() - c.coherent_level()) < 1e-6 * occ);
  }
  SUBCASE("vacuum gives zero") {
    const auto l = build_liouvillian(make(0.1, 0.0, 0.45, 0.22, 6));
    const auto c = two_time_correlation(l, steady_state(l), taus(0.5, 20.0));
    for (const auto& v : c.values) CHECK(std::abs(v) < 1e-14);
  }
  SUBCASE("coherent state has a flat correlation") {
    const auto l = build_liouvillian(make(0.1, 0.16, 0.0, 0.22, 24));
    const auto c = two_time_correlation(l, steady_state(l), taus(0.5, 40.0));
    const double level = std::norm(oracle::coherent_amplitude(0.1, 0.16, 0.22));
    for (const auto& v : c.values) CHECK(std::abs(v - level) < 1e-7);
  }
  SUBCASE("too short a window is an error") {
    const auto l = build_liouvillian(fig3(10));
    CHECK_THROWS_AS(two_time_correlation(l, steady_state(l), taus(0.1, 5.0)), Error);
  }
}

TEST_CASE("linear model has no incoherent light") {
  const auto p = make(0.1, 0.16, 0.0, 0.22, 40);
  const auto grid = uniform_grid(-1.5, 1.5, 61);
  const auto s = internal_spectrum(p, grid, 0.0107);
  CHECK(max_abs(s.incoherent.values()) < 1e-8 * s.rayleigh_weight);

  // the whole spectrum is the detector Lorentzian around the laser line
  const double weight = 2.0 * std::numbers::pi * std::norm(oracle::coherent_amplitude(0.1, 0.16, 0.22));
  CHECK(s.rayleigh_weight == doctest::Approx(weight).epsilon(1e-9));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    CHECK(s.total.values()[k] ==
          doctest::Approx(weight * oracle::lorentzian(grid[k], 0.0107)).epsilon(1e-7));
  }
}

TEST_CASE("dark input gives a zero spectrum") {
  const auto s = internal_spectrum(make(0.1, 0.0, 0.45, 0.22, 8), uniform_grid(-1, 1, 41), 0.0107);
  CHECK(max_abs(s.total.values()) < 1e-14);
}

TEST_CASE("resolvent spectrum matches the eigendecomposition oracle") {
  const auto p = fig3(10);
  const auto l = build_liouvillian(p);
  const auto rho = steady_state(l);
  const auto grid = uniform_grid(-1.5, 1.5, 121);
  const auto ref = oracle::eigen_spectrum(l.generator(), rho.entries(), grid);
  const double peak = max_abs(ref);
  for (auto backend : {ResolventBackend::schur_parallel, ResolventBackend::dense_reference,
                       ResolventBackend::sparse}) {
    const auto s = incoherent_spectrum_detailed(l, rho, grid, annihilation(10).entries(), backend);
    double dev = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      dev = std::max(dev, std::abs(s.spectrum.values()[k] - ref[k]));
    }
    CHECK(dev < 1e-9 * peak);
    CHECK(s.max_imaginary_residue < 1e-10 * peak);
  }
  // sparse generator route
  const auto sg = build_sparse_generator(p);
  const auto s2 = incoherent_spectrum_detailed(sg, steady_state(sg, 10), grid,
                                               annihilation(10).entries());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    CHECK(std::abs(s2.spectrum.values()[k] - ref[k]) < 1e-9 * peak);
  }
}

TEST_CASE("resolvent and time-domain routes agree") {
  const auto p = fig3(12);
  const auto l = build_liouvillian(p);
  const auto rho = steady_state(l);
  const auto grid = uniform_grid(-1.5, 1.5, 151);
  const auto res = incoherent_spectrum(l, rho, grid);
  const auto c = two_time_correlation(l, rho, taus(0.02, 200.0));
  const auto td = time_domain_spectrum(c, grid);
  const double peak = max_abs(res.values());
  for (std::size_t k = 0; k < grid.size(); ++k) CHECK(std::abs(td[k] - res.values()[k]) < 1e-3 * peak);
}

TEST_CASE("Fig. 3 internal spectrum") {
  const auto p = fig3(20);
  const auto grid = uniform_grid(-1.5, 1.5, 301);
  const auto s = internal_spectrum(p, grid, 0.0107);
  const auto& inc = s.incoherent.values();
  const double peak = *std::max_element(inc.begin(), inc.end());
  for (double v : inc) CHECK(v >= -1e-8 * peak);
  CHECK(asymmetry_functional(s.incoherent) < 0.01);
  CHECK(asymmetry_functional(s.total) < 0.01);
  // the laser line dominates at zero detuning
  const auto mid = grid.size() / 2;
  CHECK(s.total.values()[mid] == doctest::Approx(s.total.peak()));
  CHECK(s.total.values()[mid] > 10.0 * peak);
  // regression anchor: sideband-to-peak ratio
  CHECK(peak / s.total.peak() == doctest::Approx(0.0158).epsilon(0.05));
}

TEST_CASE("Parseval sum rule") {
  for (const auto& p : {fig3(20), make(0.08, 0.075, 0.205, 0.2, 20), make(0.08, 0.045, 0.1, 0.15, 20)}) {
    const auto grid = uniform_grid(-20.0, 20.0, 2001);
    const auto l = build_liouvillian(p);
    const auto rho = steady_state(l);
    const auto s = incoherent_spectrum_detailed(l, rho, grid, annihilation(20).entries());
    const double area = integrate(grid, s.spectrum.values()) / (2.0 * std::numbers::pi);
    const double fluct = s.occupation - std::norm(s.mean_field);
    CHECK(area == doctest::Approx(fluct).epsilon(1e-4));
  }
}

TEST_CASE("Rayleigh line area") {
  const auto p = fig3(12);
  const auto grid = uniform_grid(-0.5, 0.5, 20001);
  const auto s = internal_spectrum(p, grid, 0.0107);
  std::vector<double> line(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) line[k] = s.total.values()[k] - s.incoherent.values()[k];
  const double expect = s.rayleigh_weight * (2.0 / std::numbers::pi) * std::atan(2.0 * 0.5 / 0.0107);
  CHECK(integrate(grid, line) == doctest::Approx(expect).epsilon(1e-6));
  CHECK(s.rayleigh_weight == doctest::Approx(2.0 * std::numbers::pi * std::norm(s.mean_field)));
}

TEST_CASE("optional full detector convolution changes little") {
  const auto p = fig3(12);
  const auto grid = uniform_grid(-1.5, 1.5, 301);
  const auto plain = internal_spectrum(p, grid, 0.0107);
  const auto conv = internal_spectrum(p, grid, 0.0107, true);
  const double peak = plain.incoherent.peak();
  for (std::size_t k = 0; k < grid.size(); k += 10) {
    CHECK(std::abs(plain.incoherent.values()[k] - conv.incoherent.values()[k]) < 0.05 * peak);
  }
}

TEST_CASE("parameter pipeline matches the explicit pipeline") {
  const auto grid = uniform_grid(-1.0, 1.0, 81);
  for (int d : {10, 16}) {
    const auto p = fig3(d);
    const auto l = build_liouvillian(p);
    const auto explicit_ = internal_spectrum(l, steady_state(l), grid, 0.0107);
    const auto piped = internal_spectrum(p, grid, 0.0107);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      CHECK(piped.total.values()[k] ==
            doctest::Approx(explicit_.total.values()[k]).epsilon(1e-9).scale(piped.total.peak()));
    }
  }
}
