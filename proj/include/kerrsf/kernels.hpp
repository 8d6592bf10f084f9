#pragma once

// Data-parallel numerical kernels. Each OpenMP kernel has a plain serial
// reference implementation that is kept for tests and for bench/.

#include <span>
#include <vector>

#include "kerrsf/dynamics.hpp"

namespace kerrsf {

/// One bilinear functional left^T (G - i D)^{-1} right.
struct ResolventTerm {
  CVector left;
  CVector right;
};

/// Evaluates left^T (G - i*shift*I)^{-1} right for many real shifts using a
/// single complex Schur factorization G = Z T Z^*, so every shift costs one
/// triangular solve. Shifts are distributed over OpenMP threads; results do
/// not depend on the thread count.
class ShiftedResolvent {
 public:
  explicit ShiftedResolvent(const CMatrix& generator);

  Eigen::Index size() const { return schur_t_.rows(); }

  /// Eigenvalues of the generator (diagonal of the Schur form).
  CVector eigenvalues() const { return schur_t_.diagonal(); }

  /// Result(k, j) is term j at shift k. Throws a numerical error naming the
  /// shift if (G - i shift) is numerically singular.
  CMatrix evaluate(std::span<const double> shifts,
                   std::span<const ResolventTerm> terms) const;

 private:
  CMatrix schur_t_;
  CMatrix schur_z_;
  double scale_ = 1.0;
};

/// Serial reference: one dense LU factorization per shift.
CMatrix resolvent_reference(const CMatrix& generator, std::span<const double> shifts,
                            std::span<const ResolventTerm> terms);

/// Sparse counterpart for large generators. Each thread analyses the common
/// pattern once and then refactorizes numerically per shift. Only the first
/// `shifted` diagonal entries receive the shift (all when negative), which
/// admits bordered systems.
CMatrix sparse_resolvent(const SparseCMatrix& generator, std::span<const double> shifts,
                         std::span<const ResolventTerm> terms, Eigen::Index shifted = -1);

/// Convolution of values (uniform grid) with a unit-area Lorentzian of FWHM
/// fwhm. Each sample holds its cell and the kernel is integrated over that cell
/// exactly, so the result stays normalized on grids as coarse as fwhm.
/// Truncated at the grid edges. The reference accepts non-uniform grids.
std::vector<double> lorentzian_convolve(std::span<const double> grid,
                                        std::span<const double> values, double fwhm);
std::vector<double> lorentzian_convolve_reference(std::span<const double> grid,
                                                  std::span<const double> values,
                                                  double fwhm);

/// Unit-area Lorentzian of full width at half maximum fwhm centred at zero.
double lorentzian(double x, double fwhm);

}  // namespace kerrsf
