#include "kerrsf/kernels.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "kerrsf/error.hpp"

namespace kerrsf {

namespace {

constexpr Complex kI{0.0, 1.0};
constexpr double kSingularTol = 1e-14;

void check_terms(std::span<const ResolventTerm> terms, Eigen::Index n) {
  for (const auto& term : terms) {
    if (term.left.size() != n || term.right.size() != n) {
      fail_validation("resolvent term size does not match the generator");
    }
  }
}

[[noreturn]] void fail_singular(double shift) {
  fail_numerical("resolvent is singular at detuning " + std::to_string(shift) + " meV");
}

// Records the smallest failing index so the reported shift does not depend
// on thread scheduling.
class FirstFailure {
 public:
  void record(std::ptrdiff_t index) {
    std::ptrdiff_t current = index_.load();
    while (index < current && !index_.compare_exchange_weak(current, index)) {
    }
  }
  bool failed() const { return index_.load() != kNone; }
  std::ptrdiff_t index() const { return index_.load(); }

 private:
  static constexpr std::ptrdiff_t kNone = std::numeric_limits<std::ptrdiff_t>::max();
  std::atomic<std::ptrdiff_t> index_{kNone};
};

}  // namespace

ShiftedResolvent::ShiftedResolvent(const CMatrix& generator) {
  if (generator.rows() != generator.cols() || generator.rows() == 0) {
    fail_validation("resolvent needs a square, non-empty generator");
  }
  Eigen::ComplexSchur<CMatrix> schur(generator, true);
  if (schur.info() != Eigen::Success) fail_numerical("complex Schur factorization failed");
  schur_t_ = schur.matrixT();
  schur_z_ = schur.matrixU();
  scale_ = std::max(1.0, generator.cwiseAbs().maxCoeff());
}

CMatrix ShiftedResolvent::evaluate(std::span<const double> shifts,
                                   std::span<const ResolventTerm> terms) const {
  const Eigen::Index n = size();
  const auto m = static_cast<Eigen::Index>(terms.size());
  check_terms(terms, n);

  // left^T Z y with y = (T - z)^{-1} Z^* right
  CMatrix lefts(n, m), rights(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    lefts.col(j) = schur_z_.transpose() * terms[static_cast<std::size_t>(j)].left;
    rights.col(j) = schur_z_.adjoint() * terms[static_cast<std::size_t>(j)].right;
  }

  const auto count = static_cast<std::ptrdiff_t>(shifts.size());
  CMatrix result(static_cast<Eigen::Index>(count), m);
  FirstFailure failure;

#pragma omp parallel
  {
    CMatrix y(n, m);
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < count; ++k) {
      const Complex z = kI * shifts[static_cast<std::size_t>(k)];
      y = rights;
      bool singular = false;
      for (Eigen::Index j = n - 1; j >= 0; --j) {
        const Complex pivot = schur_t_(j, j) - z;
        if (std::abs(pivot) <= kSingularTol * scale_) {
          singular = true;
          break;
        }
        y.row(j) /= pivot;
        if (j > 0) {
          y.topRows(j).noalias() -= schur_t_.col(j).head(j) * y.row(j);
        }
      }
      if (singular) {
        failure.record(k);
        continue;
      }
      for (Eigen::Index t = 0; t < m; ++t) {
        result(static_cast<Eigen::Index>(k), t) = lefts.col(t).transpose() * y.col(t);
      }
    }
  }
  if (failure.failed()) fail_singular(shifts[static_cast<std::size_t>(failure.index())]);
  return result;
}

CMatrix resolvent_reference(const CMatrix& generator, std::span<const double> shifts,
                            std::span<const ResolventTerm> terms) {
  const Eigen::Index n = generator.rows();
  check_terms(terms, n);
  const auto m = static_cast<Eigen::Index>(terms.size());
  CMatrix result(static_cast<Eigen::Index>(shifts.size()), m);
  for (std::size_t k = 0; k < shifts.size(); ++k) {
    CMatrix shifted = generator;
    shifted.diagonal().array() -= kI * shifts[k];
    Eigen::PartialPivLU<CMatrix> lu(shifted);
    if (!(lu.rcond() > kSingularTol)) fail_singular(shifts[k]);
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto& term = terms[static_cast<std::size_t>(j)];
      result(static_cast<Eigen::Index>(k), j) = term.left.transpose() * lu.solve(term.right);
    }
  }
  return result;
}

CMatrix sparse_resolvent(const SparseCMatrix& generator, std::span<const double> shifts,
                         std::span<const ResolventTerm> terms, Eigen::Index shifted) {
  const Eigen::Index n = generator.rows();
  check_terms(terms, n);
  if (shifted < 0 || shifted > n) shifted = n;
  const auto m = static_cast<Eigen::Index>(terms.size());
  SparseCMatrix id(n, n);
  std::vector<Eigen::Triplet<Complex>> diagonal;
  for (Eigen::Index i = 0; i < shifted; ++i) diagonal.emplace_back(i, i, 1.0);
  id.setFromTriplets(diagonal.begin(), diagonal.end());
  // Pattern shared by every shift: generator plus a structural diagonal.
  SparseCMatrix pattern = generator + id;
  pattern.makeCompressed();

  const auto count = static_cast<std::ptrdiff_t>(shifts.size());
  CMatrix result(static_cast<Eigen::Index>(count), m);
  FirstFailure failure;

#pragma omp parallel
  {
    Eigen::SparseLU<SparseCMatrix, Eigen::COLAMDOrdering<int>> lu;
    lu.analyzePattern(pattern);
#pragma omp for schedule(dynamic, 1)
    for (std::ptrdiff_t k = 0; k < count; ++k) {
      const Complex z = kI * shifts[static_cast<std::size_t>(k)];
      SparseCMatrix shifted = generator + (-z) * id;
      shifted.makeCompressed();
      lu.factorize(shifted);
      if (lu.info() != Eigen::Success) {
        failure.record(k);
        continue;
      }
      for (Eigen::Index j = 0; j < m; ++j) {
        const auto& term = terms[static_cast<std::size_t>(j)];
        const CVector x = lu.solve(term.right);
        result(static_cast<Eigen::Index>(k), j) = term.left.transpose() * x;
      }
    }
  }
  if (failure.failed()) fail_singular(shifts[static_cast<std::size_t>(failure.index())]);
  return result;
}

double lorentzian(double x, double fwhm) {
  const double half = 0.5 * fwhm;
  return half / (std::numbers::pi * (x * x + half * half));
}

namespace {

// Lorentzian centred at x integrated over [lo, hi].
double lorentzian_cell(double x, double lo, double hi, double fwhm) {
  const double half = 0.5 * fwhm;
  return (std::atan((hi - x) / half) - std::atan((lo - x) / half)) / std::numbers::pi;
}

void check_convolution_input(std::span<const double> grid, std::span<const double> values,
                             double fwhm) {
  if (grid.size() != values.size() || grid.size() < 2) {
    fail_validation("convolution needs matching grid/values with >= 2 points");
  }
  if (!(fwhm > 0.0)) fail_validation("convolution width must be > 0");
}

}  // namespace

std::vector<double> lorentzian_convolve(std::span<const double> grid,
                                        std::span<const double> values, double fwhm) {
  check_convolution_input(grid, values, fwhm);
  const std::size_t count = grid.size();
  const double h = (grid.back() - grid.front()) / static_cast<double>(count - 1);
  std::vector<double> out(count, 0.0);
  const auto n = static_cast<std::ptrdiff_t>(count);
  // Kernel integrated over each sample's cell; stays normalized when h ~ fwhm.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double x = grid[static_cast<std::size_t>(i)];
    double sum = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      const double lo = k == 0 ? grid[k] : grid[k] - 0.5 * h;
      const double hi = k + 1 == count ? grid[k] : grid[k] + 0.5 * h;
      sum += values[k] * lorentzian_cell(x, lo, hi, fwhm);
    }
    out[static_cast<std::size_t>(i)] = sum;
  }
  return out;
}

std::vector<double> lorentzian_convolve_reference(std::span<const double> grid,
                                                  std::span<const double> values,
                                                  double fwhm) {
  check_convolution_input(grid, values, fwhm);
  const std::size_t count = grid.size();
  std::vector<double> out(count, 0.0);
  // Non-uniform-safe cells bounded by neighbour midpoints.
  std::vector<double> edge(count + 1);
  edge.front() = grid.front();
  edge.back() = grid.back();
  for (std::size_t k = 1; k < count; ++k) edge[k] = 0.5 * (grid[k - 1] + grid[k]);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < count; ++k) {
      out[i] += values[k] * lorentzian_cell(grid[i], edge[k], edge[k + 1], fwhm);
    }
  }
  return out;
}

}  // namespace kerrsf
