#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Sparse>

#include "kerrsf/fock_space.hpp"

namespace kerrsf {

using SparseCMatrix = Eigen::SparseMatrix<Complex>;

// Superoperators act on column-stacked density matrices:
//   vec(rho)[i + D*j] = rho(i, j)
//   X rho  -> (I (x) X) vec(rho)
//   rho X  -> (X^T (x) I) vec(rho)

CVector vectorize(const CMatrix& m);
CMatrix unvectorize(const CVector& v, int dim);

/// Row vector t with t . vec(X) = Tr X.
CVector trace_functional(int dim);

/// Row vector w with w . vec(X) = Tr[op X] (no conjugation applied).
CVector trace_functional(const CMatrix& op);

/// Generator of d(rho)/dt = -i[H, rho] + sum_k (c_k rho c_k^dag - {c_k^dag c_k, rho}/2).
CMatrix lindblad_generator(const CMatrix& h, std::span<const CMatrix> collapse);
SparseCMatrix sparse_lindblad_generator(const CMatrix& h,
                                        std::span<const CMatrix> collapse);
SparseCMatrix sparse_lindblad_generator(const SparseCMatrix& h,
                                        std::span<const SparseCMatrix> collapse);

/// Lindblad generator on D^2 x D^2, immutable after construction.
class Liouvillian {
 public:
  static constexpr double kTraceResidualTol = 1e-10;

  /// Throws a validation error if the generator is not (D^2 x D^2) or fails
  /// trace preservation.
  explicit Liouvillian(CMatrix generator,
                       std::optional<CollectiveModelParams> params = {});

  int dim() const { return dim_; }
  Eigen::Index size() const { return generator_.rows(); }
  const CMatrix& generator() const { return generator_; }
  const std::optional<CollectiveModelParams>& params() const { return params_; }

  /// || t L ||_2 for the trace row t.
  double trace_residual() const;

 private:
  CMatrix generator_;
  std::optional<CollectiveModelParams> params_;
  int dim_ = 0;
};

/// rho' = -i[H, rho] + (gamma/2)(2 a rho a^dag - a^dag a rho - rho a^dag a).
Liouvillian build_liouvillian(const CollectiveModelParams& params);
SparseCMatrix build_sparse_generator(const CollectiveModelParams& params);

/// Stationary state from the generator with one equation replaced by the
/// trace condition. Throws a numerical error if the null space is not
/// one-dimensional (ambiguous steady state) or the residual exceeds 1e-10.
DensityMatrix steady_state(const Liouvillian& liouvillian);
DensityMatrix steady_state(const SparseCMatrix& generator, int dim);

/// Propagates the vacuum for t_relax and accepts the result if
/// ||G vec(rho)|| <= residual_tol * max|G|. For generators too large for a
/// sparse direct factorization (multi-mode oracle).
DensityMatrix steady_state_by_relaxation(const SparseCMatrix& generator, int dim,
                                         double t_relax, double residual_tol = 1e-10);

/// Independent route: eigenvector of the eigenvalue closest to zero,
/// normalized to unit trace. Used to cross-check steady_state().
DensityMatrix steady_state_by_eigenvector(const Liouvillian& liouvillian);

CVector liouvillian_eigenvalues(const Liouvillian& liouvillian);

enum class PropagationMethod { automatic, exponential, ode };

/// e^{L t} applied to x (a D x D matrix). The automatic choice uses the
/// scaled-and-squared exponential up to D^2 = 3600 and an adaptive
/// Dormand-Prince integrator (rtol 1e-10) beyond.
CMatrix propagate(const Liouvillian& liouvillian, const CMatrix& x, double t,
                  PropagationMethod method = PropagationMethod::automatic);

/// Observes e^{G t_k} x0 at every t_k of an ascending time grid starting at 0,
/// using adaptive Dormand-Prince with dense output (rtol 1e-10) on a sparse
/// generator. observe(k, x) is called in order.
void propagate_observe(const SparseCMatrix& generator, const CVector& x0,
                       std::span<const double> times,
                       const std::function<void(std::size_t, const CVector&)>& observe);

/// Repeated propagation by a fixed step; caches e^{L dt}.
class StepPropagator {
 public:
  StepPropagator(const Liouvillian& liouvillian, double step);
  CVector advance(const CVector& state) const { return step_map_ * state; }

 private:
  CMatrix step_map_;
};

struct TruncationSample {
  int dim = 0;
  double occupation = 0.0;       // <a^dag a>_ss
  double tail_population = 0.0;  // sum_{n >= dim-4} <n|rho_ss|n>
};

struct TruncationSchedule {
  int start = 8;
  int step = 4;
  int lookahead = 8;
  int max_dim = 200;
};

struct TruncationReport {
  int d_star = 0;
  double tolerance = 0.0;
  std::vector<TruncationSample> samples;  // ascending in dim
};

/// Smallest D in the schedule whose occupation (relative) and tail population
/// (absolute) change by less than tol when D -> D + lookahead. Throws a
/// numerical error when no D <= max_dim qualifies.
TruncationReport converge_truncation(CollectiveModelParams params, double tol,
                                     const TruncationSchedule& schedule = {});

TruncationSample truncation_sample(const CollectiveModelParams& params, int dim);

}  // namespace kerrsf
