#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "kerrsf/correlations.hpp"
#include "kerrsf/error.hpp"
#include "kerrsf/medium_optics.hpp"

using namespace kerrsf;

namespace {

MediumParams medium(double f, double delta_res, double gamma, AbsorptionMode mode) {
  MediumParams m;
  m.f = f;
  m.delta_res = delta_res;
  m.gamma = gamma;
  m.mode = mode;
  return m;
}

}  // namespace

TEST_CASE("susceptibility") {
  auto m = medium(1.0, 0.1, 0.22, AbsorptionMode::thin_film_proportional);
  const Complex on = susceptibility(0.1, m);
  CHECK(std::abs(on.real()) < 1e-15);
  CHECK(on.imag() == doctest::Approx(2.0 / 0.22));
  CHECK(on.imag() == doctest::Approx(9.0909).epsilon(1e-4));
  for (double d : {-100.0, 100.0}) {
    CHECK(std::abs(susceptibility(d, m)) * std::abs(d) == doctest::Approx(1.0).epsilon(0.01));
  }
  for (double d : {-1.0, 0.0, 0.3}) CHECK(susceptibility(d, m).imag() > 0.0);
  m.f = 0.0;
  CHECK(std::abs(susceptibility(0.3, m)) == 0.0);
}

TEST_CASE("thin-film absorption") {
  auto m = medium(1.0, 0.1, 0.22, AbsorptionMode::thin_film_proportional);
  m.a_max = 1.0;
  CHECK(absorption_at(0.1, m) == doctest::Approx(1.0));
  CHECK(absorption_at(0.1 + 0.11, m) == doctest::Approx(0.5));
  CHECK(absorption_at(0.1 - 0.11, m) == doctest::Approx(0.5));

  // Lorentzian area a_max pi gamma / 2
  m.a_max = 0.9;
  const auto grid = uniform_grid(-200.0, 200.0, 400001);
  const auto a = absorption(grid, m);
  CHECK(a.kind() == SpectrumKind::absorption);
  CHECK(integrate(grid, a.values()) == doctest::Approx(0.9 * std::numbers::pi * 0.22 / 2).epsilon(0.01));
}

TEST_CASE("transparent medium") {
  for (auto mode : {AbsorptionMode::thin_film_proportional, AbsorptionMode::slab}) {
    const auto a = absorption(uniform_grid(-1, 1, 21), medium(0.0, 0.1, 0.22, mode));
    for (double v : a.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("slab absorption") {
  // f = gamma / 2 and unit thickness make xi(delta_res) = i
  auto m = medium(0.11, 0.1, 0.22, AbsorptionMode::slab);
  m.slab_phase_thickness = 1.0;
  CHECK(absorption_at(0.1, m) == doctest::Approx(0.5));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto r = medium(u(rng), u(rng) - 1.5, 0.05 + u(rng), AbsorptionMode::slab);
    r.slab_phase_thickness = u(rng);
    const double a = absorption_at(u(rng) - 1.5, r);
    CHECK(a >= -1e-10);
    CHECK(a <= 1.0 + 1e-10);
  }
}

TEST_CASE("medium parameter validation") {
  auto m = medium(1.0, 0.0, 0.22, AbsorptionMode::thin_film_proportional);
  m.a_max = 1.5;
  CHECK_THROWS_AS(m.validate(), Error);
  m.a_max = 0.9;
  m.scale = 0.0;
  CHECK_THROWS_AS(m.validate(), Error);
  m.scale = 1.0;
  m.f = -1.0;
  CHECK_THROWS_AS(m.validate(), Error);
  CHECK(absorption_mode_from_string("slab") == AbsorptionMode::slab);
  CHECK(absorption_mode_from_string("thin_film_proportional") == AbsorptionMode::thin_film_proportional);
  CHECK_THROWS_AS(absorption_mode_from_string("mirror"), Error);
}

TEST_CASE("monotone Rayleigh suppression with detuning") {
  double last = 2.0;
  for (double dres : {0.0, 0.05, 0.1, 0.2, 0.4}) {
    const double a0 = absorption_at(0.0, medium(1.0, dres, 0.22, AbsorptionMode::thin_film_proportional));
    CHECK(a0 < last);
    last = a0;
  }
  last = 2.0;
  for (double dres : {0.0, 0.05, 0.1, 0.2, 0.4}) {
    const double a0 = absorption_at(0.0, medium(1.0, dres, 0.22, AbsorptionMode::slab));
    CHECK(a0 < last);
    last = a0;
  }
}

TEST_CASE("output spectrum assembly") {
  CollectiveModelParams p;
  p.delta = 0.1;
  p.rabi = 0.16;
  p.kerr = 0.45;
  p.gamma = 0.22;
  p.fock_dim = 20;
  const auto grid = uniform_grid(-1.5, 1.5, 301);
  const auto internal = internal_spectrum(p, grid, 0.0107);

  SUBCASE("opaque-free medium leaves the background") {
    auto m = medium(0.0, 0.1, 0.22, AbsorptionMode::thin_film_proportional);
    m.background = 0.25;
    const auto out = output_spectrum(internal.total, m);
    for (double v : out.values()) CHECK(v == 0.25);
  }
  SUBCASE("pointwise product at the laser line") {
    auto m = medium(1.0, 0.1, 0.22, AbsorptionMode::thin_film_proportional);
    m.scale = 3.0;
    m.background = 0.01;
    const auto out = output_spectrum(internal.total, m);
    const auto mid = grid.size() / 2;
    CHECK(grid[mid] == 0.0);
    CHECK(out.values()[mid] == 3.0 * absorption_at(0.0, m) * internal.total.values()[mid] + 0.01);
    CHECK(out.kind() == SpectrumKind::output);
  }
  SUBCASE("incoherent output peak lies between the laser and the resonance") {
    const auto m = medium(1.0, 0.1, 0.22, AbsorptionMode::thin_film_proportional);
    const auto out = output_spectrum(internal.incoherent, m);
    const auto& v = out.values();
    const auto k = std::max_element(v.begin(), v.end()) - v.begin();
    CHECK(grid[k] > 0.0);
    CHECK(grid[k] < 0.1);
    CHECK(asymmetry_functional(internal.incoherent) < 0.01);
    CHECK(asymmetry_functional(out) > 0.01);
  }
  SUBCASE("grid mismatch and wrong kind are rejected") {
    const auto m = medium(1.0, 0.1, 0.22, AbsorptionMode::thin_film_proportional);
    const auto other = absorption(uniform_grid(-1.0, 1.0, 301), m);
    CHECK_THROWS_AS(output_spectrum(internal.total, other, m), Error);
    CHECK_THROWS_AS(output_spectrum(other, m), Error);
  }
}
