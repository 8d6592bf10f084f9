#include "kerrsf/fock_space.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "kerrsf/error.hpp"

namespace kerrsf {

namespace {

void require_dim(int dim) {
  if (dim < 2) {
    fail_validation("Fock dimension must be >= 2, got " + std::to_string(dim));
  }
}

double max_abs(const CMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace

OperatorMatrix::OperatorMatrix(CMatrix entries, bool hamiltonian)
    : entries_(std::move(entries)), hamiltonian_(hamiltonian) {
  if (entries_.rows() != entries_.cols()) {
    fail_validation("operator matrix must be square");
  }
  require_dim(static_cast<int>(entries_.rows()));
  if (hamiltonian_ && max_abs(entries_ - entries_.adjoint()) > 1e-12) {
    fail_validation("Hamiltonian-flagged operator is not Hermitian");
  }
}

OperatorMatrix OperatorMatrix::adjoint() const {
  return OperatorMatrix(entries_.adjoint(), hamiltonian_);
}

OperatorMatrix operator*(const OperatorMatrix& lhs, const OperatorMatrix& rhs) {
  if (lhs.dim() != rhs.dim()) fail_validation("operator dimension mismatch");
  return OperatorMatrix(lhs.entries() * rhs.entries());
}

OperatorMatrix operator+(const OperatorMatrix& lhs, const OperatorMatrix& rhs) {
  if (lhs.dim() != rhs.dim()) fail_validation("operator dimension mismatch");
  return OperatorMatrix(lhs.entries() + rhs.entries());
}

OperatorMatrix operator*(Complex factor, const OperatorMatrix& op) {
  return OperatorMatrix(factor * op.entries());
}

void CollectiveModelParams::validate() const {
  if (!std::isfinite(delta) || !std::isfinite(rabi) || !std::isfinite(kerr) ||
      !std::isfinite(gamma)) {
    fail_validation("collective model parameters must be finite");
  }
  if (!(gamma > 0.0)) fail_validation("gamma must be > 0");
  if (rabi < 0.0) fail_validation("rabi must be >= 0");
  require_dim(fock_dim);
  if (laser_power && !(std::isfinite(*laser_power) && *laser_power >= 0.0)) {
    fail_validation("laser_power must be finite and >= 0");
  }
}

DensityMatrix::DensityMatrix(CMatrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || entries_.rows() < 1) {
    fail_validation("density matrix must be square and non-empty");
  }
  const double herm = max_abs(entries_ - entries_.adjoint());
  if (herm > kHermitianTol) {
    fail_numerical("density matrix not Hermitian (max |rho - rho^dag| = " +
                   std::to_string(herm) + ")");
  }
  const Complex tr = entries_.trace();
  if (std::abs(tr - 1.0) > kTraceTol) {
    fail_numerical("density matrix trace deviates from 1 by " +
                   std::to_string(std::abs(tr - 1.0)));
  }
  // Symmetrize away round-off below the tolerance checked above.
  entries_ = 0.5 * (entries_ + entries_.adjoint()).eval();
  const double lmin = min_eigenvalue();
  if (lmin < kPositivityTol) {
    fail_numerical("density matrix not positive semidefinite (min eigenvalue " +
                   std::to_string(lmin) + ")");
  }
}

double DensityMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(entries_,
                                                Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

DensityMatrix DensityMatrix::pure(const CVector& state) {
  const CVector psi = state / state.norm();
  return DensityMatrix(psi * psi.adjoint());
}

OperatorMatrix annihilation(int dim) {
  require_dim(dim);
  CMatrix a = CMatrix::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return OperatorMatrix(std::move(a));
}

OperatorMatrix creation(int dim) { return annihilation(dim).adjoint(); }

OperatorMatrix number(int dim) {
  require_dim(dim);
  CMatrix n = CMatrix::Zero(dim, dim);
  for (int k = 0; k < dim; ++k) n(k, k) = static_cast<double>(k);
  return OperatorMatrix(std::move(n), true);
}

OperatorMatrix identity(int dim) {
  require_dim(dim);
  return OperatorMatrix(CMatrix::Identity(dim, dim), true);
}

OperatorMatrix hamiltonian(const CollectiveModelParams& params) {
  params.validate();
  const int dim = params.fock_dim;
  CMatrix h = CMatrix::Zero(dim, dim);
  for (int n = 0; n < dim; ++n) {
    const double nd = static_cast<double>(n);
    h(n, n) = params.delta * nd + params.kerr * nd * (nd - 1.0);
    if (n + 1 < dim) {
      const double coupling = params.rabi * std::sqrt(nd + 1.0);
      h(n, n + 1) = coupling;
      h(n + 1, n) = coupling;
    }
  }
  return OperatorMatrix(std::move(h), true);
}

Complex expectation(const OperatorMatrix& op, const DensityMatrix& rho) {
  if (op.dim() != rho.dim()) {
    fail_validation("expectation: operator dim " + std::to_string(op.dim()) +
                    " != state dim " + std::to_string(rho.dim()));
  }
  // Tr[A B] = sum_ij A_ij B_ji
  return op.entries().cwiseProduct(rho.entries().transpose()).sum();
}

CVector coherent_state(Complex alpha, int dim) {
  require_dim(dim);
  CVector psi(dim);
  psi(0) = 1.0;
  for (int n = 1; n < dim; ++n) {
    psi(n) = psi(n - 1) * alpha / std::sqrt(static_cast<double>(n));
  }
  return psi * std::exp(-0.5 * std::norm(alpha));
}

}  // namespace kerrsf
