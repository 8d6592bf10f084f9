#include "kerrsf/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <boost/numeric/odeint.hpp>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "kerrsf/error.hpp"

namespace kerrsf {

namespace {

constexpr Complex kI{0.0, 1.0};
constexpr Eigen::Index kExponentialLimit = 3600;

int dim_from_size(Eigen::Index size) {
  const auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(size))));
  if (d * d != size) {
    fail_validation("superoperator size " + std::to_string(size) +
                    " is not a perfect square");
  }
  return static_cast<int>(d);
}

SparseCMatrix sparse_identity(Eigen::Index n) {
  SparseCMatrix id(n, n);
  id.setIdentity();
  return id;
}

double generator_scale(const CMatrix& g) {
  return std::max(1.0, g.cwiseAbs().maxCoeff());
}

}  // namespace

CVector vectorize(const CMatrix& m) {
  return Eigen::Map<const CVector>(m.data(), m.size());
}

CMatrix unvectorize(const CVector& v, int dim) {
  if (v.size() != static_cast<Eigen::Index>(dim) * dim) {
    fail_validation("unvectorize: size mismatch");
  }
  return Eigen::Map<const CMatrix>(v.data(), dim, dim);
}

CVector trace_functional(int dim) {
  CVector t = CVector::Zero(static_cast<Eigen::Index>(dim) * dim);
  for (int i = 0; i < dim; ++i) t(i + static_cast<Eigen::Index>(dim) * i) = 1.0;
  return t;
}

CVector trace_functional(const CMatrix& op) {
  // Tr[op X] = sum_ij op(j, i) X(i, j) = vec(op^T) . vec(X)
  return vectorize(op.transpose());
}

CMatrix lindblad_generator(const CMatrix& h, std::span<const CMatrix> collapse) {
  const Eigen::Index d = h.rows();
  const CMatrix id = CMatrix::Identity(d, d);
  CMatrix gen = -kI * (Eigen::kroneckerProduct(id, h).eval() -
                       Eigen::kroneckerProduct(h.transpose(), id).eval());
  for (const CMatrix& c : collapse) {
    const CMatrix cdc = c.adjoint() * c;
    gen += Eigen::kroneckerProduct(c.conjugate(), c).eval();
    gen -= 0.5 * Eigen::kroneckerProduct(id, cdc).eval();
    gen -= 0.5 * Eigen::kroneckerProduct(cdc.transpose(), id).eval();
  }
  return gen;
}

SparseCMatrix sparse_lindblad_generator(const CMatrix& h,
                                        std::span<const CMatrix> collapse) {
  std::vector<SparseCMatrix> jumps;
  jumps.reserve(collapse.size());
  for (const CMatrix& c : collapse) jumps.emplace_back(c.sparseView());
  return sparse_lindblad_generator(SparseCMatrix(h.sparseView()), jumps);
}

SparseCMatrix sparse_lindblad_generator(const SparseCMatrix& h,
                                        std::span<const SparseCMatrix> collapse) {
  const Eigen::Index d = h.rows();
  const SparseCMatrix id = sparse_identity(d);
  const SparseCMatrix ht = h.transpose();
  SparseCMatrix gen = -kI * (SparseCMatrix(Eigen::kroneckerProduct(id, h)) -
                             SparseCMatrix(Eigen::kroneckerProduct(ht, id)));
  for (const SparseCMatrix& c : collapse) {
    const SparseCMatrix cc = c.conjugate();
    const SparseCMatrix cdc = SparseCMatrix(c.adjoint()) * c;
    const SparseCMatrix cdct = cdc.transpose();
    gen += SparseCMatrix(Eigen::kroneckerProduct(cc, c));
    gen -= 0.5 * SparseCMatrix(Eigen::kroneckerProduct(id, cdc));
    gen -= 0.5 * SparseCMatrix(Eigen::kroneckerProduct(cdct, id));
  }
  gen.prune(Complex(0.0));
  gen.makeCompressed();
  return gen;
}

Liouvillian::Liouvillian(CMatrix generator,
                         std::optional<CollectiveModelParams> params)
    : generator_(std::move(generator)), params_(std::move(params)) {
  if (generator_.rows() != generator_.cols()) {
    fail_validation("Liouvillian generator must be square");
  }
  dim_ = dim_from_size(generator_.rows());
  const double residual = trace_residual();
  if (residual > kTraceResidualTol * generator_scale(generator_)) {
    fail_validation("generator is not trace preserving (residual " +
                    std::to_string(residual) + ")");
  }
}

double Liouvillian::trace_residual() const {
  CVector row = CVector::Zero(size());
  for (int i = 0; i < dim_; ++i) {
    row += generator_.row(i + static_cast<Eigen::Index>(dim_) * i).transpose();
  }
  return row.norm();
}

Liouvillian build_liouvillian(const CollectiveModelParams& params) {
  const OperatorMatrix h = hamiltonian(params);
  const CMatrix jump = std::sqrt(params.gamma) * annihilation(params.fock_dim).entries();
  return Liouvillian(lindblad_generator(h.entries(), std::span(&jump, 1)), params);
}

SparseCMatrix build_sparse_generator(const CollectiveModelParams& params) {
  const OperatorMatrix h = hamiltonian(params);
  const CMatrix jump = std::sqrt(params.gamma) * annihilation(params.fock_dim).entries();
  return sparse_lindblad_generator(h.entries(), std::span(&jump, 1));
}

DensityMatrix steady_state(const Liouvillian& liouvillian) {
  const int d = liouvillian.dim();
  const Eigen::Index n = liouvillian.size();
  CMatrix system = liouvillian.generator();
  system.row(0) = trace_functional(d).transpose();
  CVector rhs = CVector::Zero(n);
  rhs(0) = 1.0;

  Eigen::PartialPivLU<CMatrix> lu(system);
  // One-dimensional null space <=> the bordered system is regular.
  const double rcond = lu.rcond();
  if (!(rcond > 1e-13)) {
    fail_numerical("ambiguous steady state: null space of the generator is not "
                   "one-dimensional (rcond " + std::to_string(rcond) + ")");
  }
  const CVector x = lu.solve(rhs);
  if (!x.allFinite()) fail_numerical("steady-state solve produced non-finite values");

  const double residual = (liouvillian.generator() * x).norm();
  if (residual > 1e-10 * generator_scale(liouvillian.generator())) {
    fail_numerical("steady-state residual " + std::to_string(residual) +
                   " exceeds 1e-10");
  }
  return DensityMatrix(unvectorize(x, d));
}

DensityMatrix steady_state(const SparseCMatrix& generator, int dim) {
  const Eigen::Index n = generator.rows();
  if (n != static_cast<Eigen::Index>(dim) * dim || generator.cols() != n) {
    fail_validation("sparse generator size does not match dim^2");
  }
  SparseCMatrix system = generator;
  system.prune([](Eigen::Index row, Eigen::Index, const Complex&) { return row != 0; });
  std::vector<Eigen::Triplet<Complex>> trace_row;
  for (int i = 0; i < dim; ++i) {
    trace_row.emplace_back(0, i + static_cast<Eigen::Index>(dim) * i, 1.0);
  }
  SparseCMatrix border(n, n);
  border.setFromTriplets(trace_row.begin(), trace_row.end());
  system += border;
  system.makeCompressed();

  Eigen::SparseLU<SparseCMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(system);
  if (lu.info() != Eigen::Success) {
    fail_numerical("ambiguous steady state: bordered sparse system is singular (" +
                   lu.lastErrorMessage() + ")");
  }
  CVector rhs = CVector::Zero(n);
  rhs(0) = 1.0;
  const CVector x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite()) {
    fail_numerical("sparse steady-state solve failed");
  }
  const double residual = (generator * x).norm();
  SparseCMatrix compressed = generator;
  compressed.makeCompressed();
  const double scale = std::max(1.0, compressed.coeffs().cwiseAbs().maxCoeff());
  if (residual > 1e-10 * scale) {
    fail_numerical("sparse steady-state residual " + std::to_string(residual) +
                   " exceeds 1e-10");
  }
  return DensityMatrix(unvectorize(x, dim));
}

DensityMatrix steady_state_by_relaxation(const SparseCMatrix& generator, int dim,
                                         double t_relax, double residual_tol) {
  const Eigen::Index n = generator.rows();
  if (n != static_cast<Eigen::Index>(dim) * dim || generator.cols() != n) {
    fail_validation("sparse generator size does not match dim^2");
  }
  if (!(t_relax > 0.0)) fail_validation("relaxation time must be > 0");
  CMatrix vacuum = CMatrix::Zero(dim, dim);
  vacuum(0, 0) = 1.0;
  const std::array<double, 2> times{0.0, t_relax};
  CVector x;
  propagate_observe(generator, vectorize(vacuum), times,
                    [&x](std::size_t, const CVector& state) { x = state; });
  CMatrix rho = unvectorize(x, dim);
  rho = 0.5 * (rho + rho.adjoint()).eval();
  rho /= rho.trace().real();
  SparseCMatrix compressed = generator;
  compressed.makeCompressed();
  const double scale = std::max(1.0, compressed.coeffs().cwiseAbs().maxCoeff());
  const double residual = (generator * vectorize(rho)).norm();
  if (residual > residual_tol * scale) {
    fail_numerical("relaxation did not reach the steady state: residual " +
                   std::to_string(residual) + " after t = " + std::to_string(t_relax));
  }
  return DensityMatrix(rho);
}

DensityMatrix steady_state_by_eigenvector(const Liouvillian& liouvillian) {
  Eigen::ComplexEigenSolver<CMatrix> solver(liouvillian.generator());
  if (solver.info() != Eigen::Success) fail_numerical("eigendecomposition failed");
  Eigen::Index best = 0;
  solver.eigenvalues().cwiseAbs().minCoeff(&best);
  const CVector v = solver.eigenvectors().col(best);
  const Complex tr = trace_functional(liouvillian.dim()).dot(v);  // dot conjugates lhs; t is real
  if (std::abs(tr) < 1e-14) fail_numerical("null eigenvector has zero trace");
  return DensityMatrix(unvectorize(v / tr, liouvillian.dim()));
}

CVector liouvillian_eigenvalues(const Liouvillian& liouvillian) {
  Eigen::ComplexEigenSolver<CMatrix> solver(liouvillian.generator(), false);
  if (solver.info() != Eigen::Success) fail_numerical("eigendecomposition failed");
  return solver.eigenvalues();
}

namespace {

using OdeState = std::vector<Complex>;

CVector propagate_ode(const Liouvillian& liouvillian, const CVector& x0, double t) {
  namespace odeint = boost::numeric::odeint;
  const SparseCMatrix gen = liouvillian.generator().sparseView();
  const Eigen::Index n = gen.rows();
  OdeState state(x0.data(), x0.data() + n);
  auto rhs = [&gen, n](const OdeState& x, OdeState& dxdt, double) {
    Eigen::Map<const CVector> xv(x.data(), n);
    Eigen::Map<CVector> dv(dxdt.data(), n);
    dv.noalias() = gen * xv;
  };
  const double abs_tol = 1e-13 * std::max(1.0, x0.cwiseAbs().maxCoeff());
  auto stepper = odeint::make_controlled(abs_tol, 1e-10,
                                         odeint::runge_kutta_dopri5<OdeState>());
  odeint::integrate_adaptive(stepper, rhs, state, 0.0, t, std::min(t, 1e-3));
  return Eigen::Map<const CVector>(state.data(), n);
}

}  // namespace

void propagate_observe(const SparseCMatrix& generator, const CVector& x0,
                       std::span<const double> times,
                       const std::function<void(std::size_t, const CVector&)>& observe) {
  namespace odeint = boost::numeric::odeint;
  const Eigen::Index n = generator.rows();
  if (generator.cols() != n || x0.size() != n) {
    fail_validation("propagate_observe: operand size does not match the generator");
  }
  if (times.empty()) return;
  if (times.front() != 0.0) fail_validation("propagate_observe: times must start at 0");
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) fail_validation("propagate_observe: times must ascend");
  }
  OdeState state(x0.data(), x0.data() + n);
  auto rhs = [&generator, n](const OdeState& x, OdeState& dxdt, double) {
    Eigen::Map<const CVector> xv(x.data(), n);
    Eigen::Map<CVector> dv(dxdt.data(), n);
    dv.noalias() = generator * xv;
  };
  std::size_t index = 0;
  auto observer = [&](const OdeState& x, double) {
    observe(index++, Eigen::Map<const CVector>(x.data(), n));
  };
  if (times.size() == 1) {
    observer(state, 0.0);
    return;
  }
  const double abs_tol = 1e-13 * std::max(1.0, x0.cwiseAbs().maxCoeff());
  auto stepper = odeint::make_dense_output(abs_tol, 1e-10,
                                           odeint::runge_kutta_dopri5<OdeState>());
  odeint::integrate_times(stepper, rhs, state, times.begin(), times.end(),
                          std::min(times[1], 1e-3), observer);
}

CMatrix propagate(const Liouvillian& liouvillian, const CMatrix& x, double t,
                  PropagationMethod method) {
  if (!(t >= 0.0) || !std::isfinite(t)) {
    fail_validation("propagate: time must be finite and >= 0");
  }
  if (x.rows() != liouvillian.dim() || x.cols() != liouvillian.dim()) {
    fail_validation("propagate: operand shape does not match the Liouvillian");
  }
  if (t == 0.0) return x;
  if (method == PropagationMethod::automatic) {
    method = liouvillian.size() <= kExponentialLimit ? PropagationMethod::exponential
                                                     : PropagationMethod::ode;
  }
  const CVector v = vectorize(x);
  if (method == PropagationMethod::exponential) {
    const CMatrix step = (liouvillian.generator() * t).exp();
    return unvectorize(step * v, liouvillian.dim());
  }
  return unvectorize(propagate_ode(liouvillian, v, t), liouvillian.dim());
}

StepPropagator::StepPropagator(const Liouvillian& liouvillian, double step) {
  if (!(step > 0.0)) fail_validation("step propagator needs a positive step");
  step_map_ = (liouvillian.generator() * step).exp();
}

TruncationSample truncation_sample(const CollectiveModelParams& params, int dim) {
  CollectiveModelParams p = params;
  p.fock_dim = dim;
  const DensityMatrix rho = steady_state(build_sparse_generator(p), dim);
  TruncationSample sample;
  sample.dim = dim;
  const CMatrix& r = rho.entries();
  for (int n = 0; n < dim; ++n) {
    const double pop = r(n, n).real();
    sample.occupation += n * pop;
    if (n >= dim - 4) sample.tail_population += pop;
  }
  return sample;
}

TruncationReport converge_truncation(CollectiveModelParams params, double tol,
                                     const TruncationSchedule& schedule) {
  if (!(tol > 0.0)) fail_validation("converge_truncation: tol must be > 0");
  if (schedule.start < 5 || schedule.step < 1 || schedule.lookahead < 1) {
    fail_validation("converge_truncation: invalid schedule");
  }
  params.fock_dim = schedule.start;
  params.validate();

  std::map<int, TruncationSample> cache;
  auto sample_at = [&](int dim) -> const TruncationSample& {
    auto it = cache.find(dim);
    if (it == cache.end()) it = cache.emplace(dim, truncation_sample(params, dim)).first;
    return it->second;
  };

  TruncationReport report;
  report.tolerance = tol;
  for (int dim = schedule.start; dim + schedule.lookahead <= schedule.max_dim;
       dim += schedule.step) {
    const TruncationSample& lo = sample_at(dim);
    const TruncationSample& hi = sample_at(dim + schedule.lookahead);
    const double occ_change =
        std::abs(lo.occupation - hi.occupation) /
        std::max(std::abs(hi.occupation), std::numeric_limits<double>::min());
    const double tail_change = std::abs(lo.tail_population - hi.tail_population);
    if (occ_change < tol && tail_change < tol) {
      report.d_star = dim;
      for (const auto& [d, s] : cache) report.samples.push_back(s);
      return report;
    }
  }
  fail_numerical("Fock truncation did not converge by D = " +
                 std::to_string(schedule.max_dim) +
                 " (drive too strong for the Kerr/decay ratio?)");
}

}  // namespace kerrsf
