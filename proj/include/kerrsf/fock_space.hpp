#pragma once

#include <complex>
#include <optional>

#include <Eigen/Dense>

namespace kerrsf {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

/// Dense operator on the truncated Fock space |0>, ..., |dim-1>.
/// entries()(m, n) = <m|O|n>. Immutable once built.
class OperatorMatrix {
 public:
  /// Throws validation errors for non-square input, dim < 2, or a
  /// Hamiltonian-flagged matrix that is not Hermitian to 1e-12.
  explicit OperatorMatrix(CMatrix entries, bool hamiltonian = false);

  int dim() const { return static_cast<int>(entries_.rows()); }
  const CMatrix& entries() const { return entries_; }
  bool is_hamiltonian() const { return hamiltonian_; }

  OperatorMatrix adjoint() const;

 private:
  CMatrix entries_;
  bool hamiltonian_ = false;
};

OperatorMatrix operator*(const OperatorMatrix& lhs, const OperatorMatrix& rhs);
OperatorMatrix operator+(const OperatorMatrix& lhs, const OperatorMatrix& rhs);
OperatorMatrix operator*(Complex factor, const OperatorMatrix& op);

/// Parameters of the single collective Kerr mode. Energies and rates in meV
/// (hbar = 1); laser power in microwatts.
struct CollectiveModelParams {
  double delta = 0.0;  // exciton minus laser frequency
  double rabi = 0.0;   // collective Rabi coupling
  double kerr = 0.0;   // collective Kerr strength
  double gamma = 1.0;  // radiative decay rate
  std::optional<double> laser_power;
  int fock_dim = 40;

  /// Throws a validation error unless gamma > 0, rabi >= 0, fock_dim >= 2
  /// and all values are finite.
  void validate() const;
};

/// Hermitian, unit-trace, positive-semidefinite state on a truncated Fock
/// space (or any finite Hilbert space).
class DensityMatrix {
 public:
  static constexpr double kHermitianTol = 1e-10;
  static constexpr double kTraceTol = 1e-10;
  static constexpr double kPositivityTol = -1e-8;

  /// Validates all three invariants; throws a numerical error on violation.
  explicit DensityMatrix(CMatrix entries);

  int dim() const { return static_cast<int>(entries_.rows()); }
  const CMatrix& entries() const { return entries_; }

  double min_eigenvalue() const;

  static DensityMatrix pure(const CVector& state);

 private:
  CMatrix entries_;
};

/// Matrix of the annihilation operator: <n-1|a|n> = sqrt(n).
OperatorMatrix annihilation(int dim);
OperatorMatrix creation(int dim);
OperatorMatrix number(int dim);
OperatorMatrix identity(int dim);

/// H = delta a^dag a + rabi (a + a^dag) + kerr a^dag^2 a^2 at params.fock_dim.
OperatorMatrix hamiltonian(const CollectiveModelParams& params);

/// Tr[op rho]. Throws a validation error on dimension mismatch.
Complex expectation(const OperatorMatrix& op, const DensityMatrix& rho);

/// Normalized coherent state |alpha> truncated to dim levels.
CVector coherent_state(Complex alpha, int dim);

}  // namespace kerrsf
