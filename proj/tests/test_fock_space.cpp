#include "doctest.h"

#include <random>

#include "kerrsf/dynamics.hpp"
#include "kerrsf/error.hpp"
#include "kerrsf/fock_space.hpp"
#include "oracles.hpp"

using namespace kerrsf;

namespace {

CollectiveModelParams fig3(int dim) {
  CollectiveModelParams p;
  p.delta = 0.1;
  p.rabi = 0.16;
  p.kerr = 0.45;
  p.gamma = 0.22;
  p.fock_dim = dim;
  return p;
}

}  // namespace

TEST_CASE("annihilation matrix elements") {
  const CMatrix a2 = annihilation(2).entries();
  CHECK(a2(0, 1) == Complex(1.0));
  CHECK(a2(0, 0) == Complex(0.0));
  CHECK(a2(1, 0) == Complex(0.0));
  CHECK(a2(1, 1) == Complex(0.0));

  const CMatrix a3 = annihilation(3).entries();
  CHECK(a3(0, 1).real() == doctest::Approx(1.0));
  CHECK(a3(1, 2).real() == doctest::Approx(1.41421356).epsilon(1e-8));
  CHECK((a3.array().abs() > 0).count() == 2);
}

TEST_CASE("truncated commutator") {
  const OperatorMatrix a = annihilation(20);
  const CMatrix c = (a * a.adjoint()).entries() - (a.adjoint() * a).entries();
  for (int n = 0; n < 19; ++n) CHECK(std::abs(c(n, n) - 1.0) < 1e-12);
  CHECK(c(19, 19).real() == doctest::Approx(-19.0));
}

TEST_CASE("annihilation lowers number states exactly") {
  const int d = 12;
  const CMatrix a = annihilation(d).entries();
  for (int n = 1; n < d; ++n) {
    CVector ket = CVector::Zero(d);
    ket(n) = 1.0;
    CVector expect = CVector::Zero(d);
    expect(n - 1) = std::sqrt(double(n));
    CHECK((a * ket - expect).norm() == 0.0);
  }
}

TEST_CASE("dimension below two is rejected") {
  CHECK_THROWS_AS(annihilation(1), Error);
  CollectiveModelParams p;
  p.fock_dim = 1;
  CHECK_THROWS_AS(p.validate(), Error);
  p.fock_dim = 4;
  p.gamma = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p.gamma = 1.0;
  p.rabi = -0.1;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("hamiltonian entries") {
  CollectiveModelParams off;
  off.fock_dim = 6;
  CHECK(hamiltonian(off).entries().norm() == 0.0);

  const CMatrix h = hamiltonian(fig3(10)).entries();
  CHECK(h(1, 1).real() == doctest::Approx(0.1));
  CHECK(h(2, 2).real() == doctest::Approx(1.1));
  CHECK(h(0, 1).real() == doctest::Approx(0.16));
  CHECK(std::abs(h(0, 2)) == 0.0);
}

TEST_CASE("hamiltonian matches an independent construction and is hermitian") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    CollectiveModelParams p;
    p.delta = u(rng);
    p.rabi = std::abs(u(rng));
    p.kerr = u(rng);
    p.fock_dim = 3 + trial;
    const CMatrix h = hamiltonian(p).entries();
    CHECK((h - h.adjoint()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((h - oracle::kerr_hamiltonian(p.delta, p.rabi, p.kerr, p.fock_dim))
              .cwiseAbs()
              .maxCoeff() < 1e-14);
    for (int n = 1; n < p.fock_dim; ++n) {
      const double step = (h(n, n) - h(n - 1, n - 1)).real();
      CHECK(step == doctest::Approx(p.delta + 2.0 * (n - 1) * p.kerr).epsilon(1e-12));
    }
  }
}

TEST_CASE("expectation values") {
  const int d = 6;
  CMatrix vac = CMatrix::Zero(d, d);
  vac(0, 0) = 1.0;
  const DensityMatrix rho(vac);
  CHECK(std::abs(expectation(identity(d), rho) - 1.0) < 1e-15);
  CHECK(std::abs(expectation(number(d), rho)) == 0.0);
  CHECK_THROWS_AS(expectation(number(d + 1), rho), Error);

  const CVector psi = coherent_state(Complex(0.3, -0.2), 20);
  const DensityMatrix coh = DensityMatrix::pure(psi);
  CHECK(std::abs(expectation(identity(20), coh) - 1.0) < 1e-12);
}

TEST_CASE("Fig. 3 occupation against the null-space oracle") {
  const auto p = fig3(40);
  const DensityMatrix rho = steady_state(build_sparse_generator(p), p.fock_dim);
  const double occ = expectation(number(40), rho).real();
  CHECK(occ > 0.0);
  CHECK(occ < 2.0);
  // regression anchor, D = 40
  CHECK(occ == doctest::Approx(0.38526828469547).epsilon(1e-10));

  // the truncated state is converged well before D = 20
  const auto small = fig3(20);
  const CMatrix ref =
      oracle::null_space_state(oracle::kerr_superoperator(0.1, 0.16, 0.45, 0.22, 20));
  const double occ_ref = (oracle::lowering(20).adjoint() * oracle::lowering(20) * ref).trace().real();
  const DensityMatrix rho20 = steady_state(build_liouvillian(small));
  CHECK(expectation(number(20), rho20).real() == doctest::Approx(occ_ref).epsilon(1e-10));
  CHECK(occ_ref == doctest::Approx(occ).epsilon(1e-9));
}

TEST_CASE("density matrix invariants") {
  CMatrix bad = CMatrix::Identity(3, 3);
  CHECK_THROWS_AS(DensityMatrix{bad}, Error);  // trace 3
  CMatrix nonherm = CMatrix::Zero(2, 2);
  nonherm(0, 0) = 1.0;
  nonherm(0, 1) = 0.1;
  CHECK_THROWS_AS(DensityMatrix{nonherm}, Error);
  CMatrix negative = CMatrix::Zero(2, 2);
  negative(0, 0) = 1.1;
  negative(1, 1) = -0.1;
  CHECK_THROWS_AS(DensityMatrix{negative}, Error);
}
