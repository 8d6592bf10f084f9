#include "kerrsf/fit_engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "kerrsf/correlations.hpp"
#include "kerrsf/dynamics.hpp"
#include "kerrsf/error.hpp"

namespace kerrsf {

// ---------------------------------------------------------------- ingestion

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t k = 0; k <= line.size(); ++k) {
    if (k == line.size() || line[k] == ',' || line[k] == '\t') {
      out.push_back(trim(line.substr(start, k - start)));
      start = k + 1;
    }
  }
  return out;
}

bool parse_double(std::string_view text, double& value) {
  if (text.empty()) return false;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  return ec == std::errc() && ptr == end;
}

[[noreturn]] void fail_line(std::string_view source, std::size_t line, const std::string& what) {
  fail_validation(std::string(source) + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

namespace {

// columns == nullopt: the plain data format, 2 or 3 fields per row.
SpectrumSeries parse_rows(std::istream& in, std::string_view source_name,
                          const std::optional<SpectrumColumns>& columns,
                          std::size_t min_points) {
  std::vector<double> grid, values, weights;
  std::vector<std::size_t> line_of;
  std::string raw;
  std::size_t line_no = 0;
  bool has_weights = columns && columns->weight.has_value();
  std::size_t needed = 0;
  if (columns) {
    needed = std::max(columns->delta, columns->intensity) + 1;
    if (columns->weight) needed = std::max(needed, *columns->weight + 1);
  }
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_fields(line);
    std::size_t ix = 0, iy = 1, iw = 2;
    if (columns) {
      if (fields.size() < needed) {
        fail_line(source_name, line_no, "expected at least " + std::to_string(needed) +
                                            " columns, found " + std::to_string(fields.size()));
      }
      ix = columns->delta;
      iy = columns->intensity;
      iw = columns->weight.value_or(0);
    } else {
      if (fields.size() < 2 || fields.size() > 3) {
        fail_line(source_name, line_no, "expected 2 or 3 columns, found " +
                                            std::to_string(fields.size()));
      }
      if (grid.empty()) {
        has_weights = fields.size() == 3;
      } else if ((fields.size() == 3) != has_weights) {
        fail_line(source_name, line_no, "inconsistent column count");
      }
    }
    double x = 0.0, y = 0.0, w = 1.0;
    if (!parse_double(fields[ix], x)) fail_line(source_name, line_no, "malformed detuning");
    if (!parse_double(fields[iy], y)) fail_line(source_name, line_no, "malformed intensity");
    if (has_weights && !parse_double(fields[iw], w)) {
      fail_line(source_name, line_no, "malformed weight");
    }
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w)) {
      fail_line(source_name, line_no, "non-finite value");
    }
    if (w < 0.0) fail_line(source_name, line_no, "negative weight");
    if (!grid.empty() && !(x > grid.back())) {
      fail_line(source_name, line_no, "detuning grid is not strictly ascending");
    }
    grid.push_back(x);
    values.push_back(y);
    line_of.push_back(line_no);
    if (has_weights) weights.push_back(w);
  }
  if (grid.size() < std::max<std::size_t>(min_points, 1)) {
    fail_validation(std::string(source_name) + ": " + std::to_string(grid.size()) +
                    " data points, at least " + std::to_string(min_points) + " required");
  }
  // Same round-off allowance as SpectrumSeries, reported with a line number.
  const double top = *std::max_element(values.begin(), values.end());
  const double floor = -1e-8 * std::max(top, 0.0);
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k] < floor) fail_line(source_name, line_of[k], "negative intensity");
  }
  return SpectrumSeries(std::move(grid), std::move(values), SpectrumKind::experimental,
                        std::move(weights));
}

std::ifstream open_spectrum(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open spectrum file " + path.string());
  return in;
}

}  // namespace

SpectrumSeries parse_spectrum(std::istream& in, std::string_view source_name,
                              std::size_t min_points) {
  return parse_rows(in, source_name, std::nullopt, min_points);
}

SpectrumSeries parse_spectrum(std::istream& in, std::string_view source_name,
                              const SpectrumColumns& columns, std::size_t min_points) {
  return parse_rows(in, source_name, columns, min_points);
}

SpectrumSeries load_spectrum(const std::filesystem::path& path, std::size_t min_points) {
  auto in = open_spectrum(path);
  return parse_rows(in, path.string(), std::nullopt, min_points);
}

SpectrumSeries load_spectrum(const std::filesystem::path& path, const SpectrumColumns& columns,
                             std::size_t min_points) {
  auto in = open_spectrum(path);
  return parse_rows(in, path.string(), columns, min_points);
}

// ------------------------------------------------------------- parameters

std::string_view to_string(FitParam p) {
  switch (p) {
    case FitParam::rabi: return "rabi";
    case FitParam::kerr: return "kerr";
    case FitParam::delta: return "delta";
    case FitParam::gamma: return "gamma";
    case FitParam::f: return "f";
    case FitParam::scale: return "scale";
    case FitParam::background: return "background";
  }
  return "unknown";
}

FitParam fit_param_from_string(std::string_view name) {
  for (FitParam p : kAllFitParams) {
    if (to_string(p) == name) return p;
  }
  fail_validation("unknown fit parameter '" + std::string(name) + "'");
}

std::string_view to_string(Optimizer o) {
  return o == Optimizer::nelder_mead ? "nelder_mead" : "levenberg_marquardt";
}

Optimizer optimizer_from_string(std::string_view name) {
  if (name == "nelder_mead") return Optimizer::nelder_mead;
  if (name == "levenberg_marquardt") return Optimizer::levenberg_marquardt;
  fail_validation("unknown optimizer '" + std::string(name) + "'");
}

void ModelPoint::sync() {
  medium.delta_res = model.delta;
  medium.gamma = model.gamma;
}

double ModelPoint::get(FitParam p) const {
  switch (p) {
    case FitParam::rabi: return model.rabi;
    case FitParam::kerr: return model.kerr;
    case FitParam::delta: return model.delta;
    case FitParam::gamma: return model.gamma;
    case FitParam::f: return medium.f;
    case FitParam::scale: return medium.scale;
    case FitParam::background: return medium.background;
  }
  return 0.0;
}

void ModelPoint::set(FitParam p, double value) {
  switch (p) {
    case FitParam::rabi: model.rabi = value; break;
    case FitParam::kerr: model.kerr = value; break;
    case FitParam::delta: model.delta = value; break;
    case FitParam::gamma: model.gamma = value; break;
    case FitParam::f: medium.f = value; break;
    case FitParam::scale: medium.scale = value; break;
    case FitParam::background: medium.background = value; break;
  }
  sync();
}

Bounds default_bounds(FitParam p) {
  switch (p) {
    case FitParam::rabi: return {0.0, 1.0};
    case FitParam::kerr: return {0.0, 2.0};
    case FitParam::delta: return {-1.0, 1.0};
    case FitParam::gamma: return {0.01, 1.0};
    case FitParam::f: return {0.0, 10.0};
    case FitParam::scale: return {1e-9, 1e9};
    case FitParam::background: return {0.0, 1e6};
  }
  return {0.0, 0.0};
}

Bounds FitConfig::bounds_for(FitParam p) const {
  const auto it = bounds.find(p);
  return it == bounds.end() ? default_bounds(p) : it->second;
}

void FitConfig::validate() const {
  for (std::size_t i = 0; i < free_params.size(); ++i) {
    for (std::size_t j = i + 1; j < free_params.size(); ++j) {
      if (free_params[i] == free_params[j]) {
        fail_validation("fit parameter '" + std::string(to_string(free_params[i])) +
                        "' listed twice");
      }
    }
  }
  for (FitParam p : free_params) {
    const Bounds b = bounds_for(p);
    const double x = initial.get(p);
    if (!(b.low < b.high)) {
      fail_validation("empty bounds for '" + std::string(to_string(p)) + "'");
    }
    if (x < b.low || x > b.high) {
      fail_validation("initial value of '" + std::string(to_string(p)) +
                      "' lies outside its bounds");
    }
  }
  if (max_evals < 1) fail_validation("max_evals must be >= 1");
  if (!(tolerance > 0.0)) fail_validation("tolerance must be > 0");
  if (fock_dim && *fock_dim < 2) fail_validation("fock_dim must be >= 2");
  if (!(initial.gamma_f > 0.0)) fail_validation("gamma_f must be > 0");
  for (const auto& [lo, hi] : exclusions) {
    if (!(lo < hi)) fail_validation("exclusion window needs low < high");
  }
  ModelPoint synced = initial;
  synced.sync();
  synced.model.validate();
  synced.medium.validate();
}

// ---------------------------------------------------------- forward model

SpectrumSeries forward_model(ModelPoint point, std::span<const double> model_grid) {
  point.sync();
  point.medium.validate();
  const InternalSpectrum internal = internal_spectrum(point.model, model_grid, point.gamma_f);
  return output_spectrum(internal.total, point.medium);
}

std::vector<double> default_model_grid(const SpectrumSeries& data) {
  const auto& grid = data.delta_grid();
  if (grid.size() < 2) fail_validation("data need at least two points");
  if (is_uniform(grid)) return grid;
  return uniform_grid(grid.front(), grid.back(), std::max<std::size_t>(grid.size(), 16));
}

namespace {

bool excluded(double x, std::span<const std::pair<double, double>> exclusions) {
  return std::any_of(exclusions.begin(), exclusions.end(),
                     [x](const auto& w) { return x >= w.first && x <= w.second; });
}

// sqrt(w_k) (model_k - data_k) over the included points.
std::vector<double> residual_vector(const SpectrumSeries& data, const SpectrumSeries& model,
                                    std::span<const double> weights,
                                    std::span<const std::pair<double, double>> exclusions) {
  const auto& xs = data.delta_grid();
  const auto& mg = model.delta_grid();
  if (!weights.empty() && weights.size() != xs.size()) {
    fail_validation("weights differ in length from the data");
  }
  if (xs.front() < mg.front() || xs.back() > mg.back()) {
    fail_validation("data extend beyond the model grid [" + std::to_string(mg.front()) + ", " +
                    std::to_string(mg.back()) + "] meV");
  }
  std::vector<double> out;
  out.reserve(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (excluded(xs[k], exclusions)) continue;
    const double w = weights.empty() ? 1.0 : weights[k];
    const double diff = interpolate(mg, model.values(), xs[k]) - data.values()[k];
    out.push_back(std::sqrt(w) * diff);
  }
  return out;
}

double sum_squares(const std::vector<double>& r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

}  // namespace

double objective(const SpectrumSeries& data, const SpectrumSeries& model,
                 std::span<const double> weights,
                 std::span<const std::pair<double, double>> exclusions) {
  return sum_squares(residual_vector(data, model, weights, exclusions));
}

double objective(const SpectrumSeries& data, const ModelPoint& point,
                 std::span<const double> weights, std::span<const double> model_grid,
                 std::span<const std::pair<double, double>> exclusions) {
  return objective(data, forward_model(point, model_grid), weights, exclusions);
}

// ------------------------------------------------------------- optimizers

namespace {

using Vec = Eigen::VectorXd;

constexpr double kFdStep = 1e-4;  // relative finite-difference step
constexpr double kInfeasible = std::numeric_limits<double>::infinity();

struct Evaluation {
  std::vector<double> residuals;
  double chi2 = kInfeasible;
};

class Problem {
 public:
  Problem(const SpectrumSeries& data, std::vector<double> weights, const FitConfig& config,
          int fock_dim)
      : data_(data),
        weights_(std::move(weights)),
        config_(config),
        grid_(default_model_grid(data)) {
    base_ = config.initial;
    base_.model.fock_dim = fock_dim;
    base_.sync();
    for (FitParam p : config.free_params) {
      const Bounds b = config.bounds_for(p);
      low_.push_back(b.low);
      high_.push_back(b.high);
    }
  }

  std::size_t dims() const { return config_.free_params.size(); }
  double low(std::size_t i) const { return low_[i]; }
  double high(std::size_t i) const { return high_[i]; }

  // Parameter i sits on a bound and the step would push it further out.
  bool blocked(Eigen::Index i, double x, double step) const {
    const auto k = static_cast<std::size_t>(i);
    return (x <= low_[k] && step < 0.0) || (x >= high_[k] && step > 0.0);
  }

  Vec clamp(Vec x) const {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x(i) = std::clamp(x(i), low_[static_cast<std::size_t>(i)], high_[static_cast<std::size_t>(i)]);
    }
    return x;
  }

  ModelPoint point(const Vec& x) const {
    ModelPoint p = base_;
    for (std::size_t i = 0; i < dims(); ++i) {
      p.set(config_.free_params[i], x(static_cast<Eigen::Index>(i)));
    }
    return p;
  }

  Vec start() const {
    Vec x(static_cast<Eigen::Index>(dims()));
    for (std::size_t i = 0; i < dims(); ++i) {
      x(static_cast<Eigen::Index>(i)) = base_.get(config_.free_params[i]);
    }
    return x;
  }

  // Pure; safe to call concurrently.
  Evaluation evaluate(const Vec& x) const {
    Evaluation e;
    try {
      const SpectrumSeries model = forward_model(point(x), grid_);
      e.residuals = residual_vector(data_, model, weights_, config_.exclusions);
      e.chi2 = sum_squares(e.residuals);
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::numerical) throw;
      e.chi2 = kInfeasible;  // e.g. slab absorption out of range: reject the point
    }
    return e;
  }

  // Serial bookkeeping, called in a fixed order.
  void record(double chi2) {
    ++evals_;
    best_ = std::min(best_, chi2);
    trace_.push_back(best_);
  }

  std::vector<Evaluation> evaluate_all(const std::vector<Vec>& points) {
    std::vector<Evaluation> out(points.size());
    const auto count = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t k = 0; k < count; ++k) {
      out[static_cast<std::size_t>(k)] = evaluate(points[static_cast<std::size_t>(k)]);
    }
    for (const auto& e : out) record(e.chi2);
    return out;
  }

  Evaluation evaluate_one(const Vec& x) {
    Evaluation e = evaluate(x);
    record(e.chi2);
    return e;
  }

  bool exhausted() const { return evals_ >= config_.max_evals; }
  int evaluations() const { return evals_; }
  const std::vector<double>& trace() const { return trace_; }

  double step_for(std::size_t i, double x) const {
    const double width = high_[i] - low_[i];
    return kFdStep * std::max(std::abs(x), 1e-3 * std::min(width, 1.0));
  }

  // Forward differences (backward at the upper bound), columns in parallel.
  Eigen::MatrixXd jacobian(const Vec& x, const Evaluation& at) {
    const std::size_t n = dims();
    std::vector<Vec> probes(n, x);
    std::vector<double> steps(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      double h = step_for(i, x(ii));
      if (x(ii) + h > high_[i]) h = -h;
      probes[i](ii) = x(ii) + h;
      steps[i] = probes[i](ii) - x(ii);
    }
    const auto evals = evaluate_all(probes);
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(at.residuals.size()),
                        static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(evals[i].chi2)) {
        fail_numerical("finite-difference probe of '" +
                       std::string(to_string(config_.free_params[i])) + "' is infeasible");
      }
      for (std::size_t k = 0; k < at.residuals.size(); ++k) {
        jac(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
            (evals[i].residuals[k] - at.residuals[k]) / steps[i];
      }
    }
    return jac;
  }

 private:
  const SpectrumSeries& data_;
  std::vector<double> weights_;
  const FitConfig& config_;
  std::vector<double> grid_;
  ModelPoint base_;
  std::vector<double> low_, high_;
  int evals_ = 0;
  double best_ = kInfeasible;
  std::vector<double> trace_;
};

struct OptimizerOutcome {
  Vec x;
  Evaluation best;
  bool converged = false;
  std::string note;
};

OptimizerOutcome nelder_mead(Problem& problem, const Vec& x0, double tol) {
  const std::size_t n = problem.dims();
  std::vector<Vec> simplex{x0};
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    Vec v = x0;
    const double width = problem.high(i) - problem.low(i);
    double h = x0(ii) != 0.0 ? 0.1 * std::abs(x0(ii)) : 0.05 * std::min(width, 1.0);
    if (v(ii) + h > problem.high(i)) h = -h;
    v(ii) += h;
    simplex.push_back(problem.clamp(v));
  }
  std::vector<Evaluation> values = problem.evaluate_all(simplex);

  std::vector<std::size_t> order(n + 1);
  const auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return values[a].chi2 < values[b].chi2;
    });
    std::vector<Vec> s;
    std::vector<Evaluation> v;
    for (std::size_t k : order) {
      s.push_back(simplex[k]);
      v.push_back(values[k]);
    }
    simplex = std::move(s);
    values = std::move(v);
  };

  OptimizerOutcome out;
  while (true) {
    sort_simplex();
    const double best = values.front().chi2;
    const double worst = values.back().chi2;
    double spread = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double s = problem.step_for(i, simplex[0](ii)) / kFdStep;
        spread = std::max(spread, std::abs(simplex[k](ii) - simplex[0](ii)) / s);
      }
    }
    if (std::isfinite(worst) && worst - best <= tol * std::max(best, 1e-300) &&
        spread <= 1e-5) {
      out.converged = true;
      break;
    }
    if (problem.exhausted()) {
      out.note = "evaluation budget exhausted";
      break;
    }
    Vec centroid = Vec::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) centroid += simplex[k];
    centroid /= static_cast<double>(n);

    const Vec reflected = problem.clamp(centroid + (centroid - simplex[n]));
    const Evaluation fr = problem.evaluate_one(reflected);
    if (fr.chi2 < values[0].chi2) {
      const Vec expanded = problem.clamp(centroid + 2.0 * (centroid - simplex[n]));
      const Evaluation fe = problem.evaluate_one(expanded);
      if (fe.chi2 < fr.chi2) {
        simplex[n] = expanded;
        values[n] = fe;
      } else {
        simplex[n] = reflected;
        values[n] = fr;
      }
      continue;
    }
    if (fr.chi2 < values[n - 1].chi2) {
      simplex[n] = reflected;
      values[n] = fr;
      continue;
    }
    const bool outside = fr.chi2 < values[n].chi2;
    const Vec contracted = outside ? problem.clamp(centroid + 0.5 * (reflected - centroid))
                                   : problem.clamp(centroid + 0.5 * (simplex[n] - centroid));
    const Evaluation fc = problem.evaluate_one(contracted);
    if (fc.chi2 < std::min(fr.chi2, values[n].chi2)) {
      simplex[n] = contracted;
      values[n] = fc;
      continue;
    }
    // shrink towards the best vertex
    std::vector<Vec> shrunk;
    for (std::size_t k = 1; k <= n; ++k) {
      shrunk.push_back(simplex[0] + 0.5 * (simplex[k] - simplex[0]));
    }
    const auto evals = problem.evaluate_all(shrunk);
    for (std::size_t k = 1; k <= n; ++k) {
      simplex[k] = shrunk[k - 1];
      values[k] = evals[k - 1];
    }
  }
  out.x = simplex.front();
  out.best = values.front();
  return out;
}

OptimizerOutcome levenberg_marquardt(Problem& problem, const Vec& x0, double tol) {
  OptimizerOutcome out;
  out.x = x0;
  out.best = problem.evaluate_one(x0);
  if (!std::isfinite(out.best.chi2)) fail_numerical("initial point of the fit is infeasible");
  double lambda = 1e-3;
  while (true) {
    if (problem.exhausted()) {
      out.note = "evaluation budget exhausted";
      return out;
    }
    const Eigen::MatrixXd jac = problem.jacobian(out.x, out.best);
    const Vec r = Eigen::Map<const Vec>(out.best.residuals.data(),
                                        static_cast<Eigen::Index>(out.best.residuals.size()));
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Vec grad = jac.transpose() * r;
    Vec diag = jtj.diagonal();
    const double floor = 1e-12 * std::max(diag.maxCoeff(), 1e-300);
    diag = diag.cwiseMax(floor);

    bool accepted = false;
    while (!accepted) {
      if (problem.exhausted()) {
        out.note = "evaluation budget exhausted";
        return out;
      }
      Eigen::MatrixXd system = jtj;
      system.diagonal() += lambda * diag;
      Vec step = system.ldlt().solve(-grad);
      // Freeze parameters held on a bound and re-solve for the rest;
      // clipping alone would spoil the descent direction.
      std::vector<bool> frozen(static_cast<std::size_t>(step.size()), false);
      for (bool changed = true; changed;) {
        changed = false;
        for (Eigen::Index i = 0; i < step.size(); ++i) {
          const auto k = static_cast<std::size_t>(i);
          if (!frozen[k] && problem.blocked(i, out.x(i), step(i))) frozen[k] = changed = true;
        }
        if (!changed) break;
        Eigen::MatrixXd reduced = system;
        Vec rhs = -grad;
        for (Eigen::Index i = 0; i < step.size(); ++i) {
          if (!frozen[static_cast<std::size_t>(i)]) continue;
          reduced.row(i).setZero();
          reduced.col(i).setZero();
          reduced(i, i) = 1.0;
          rhs(i) = 0.0;
        }
        step = reduced.ldlt().solve(rhs);
      }
      const Vec trial = problem.clamp(out.x + step);
      const Vec moved = trial - out.x;
      double rel_move = 0.0;
      for (Eigen::Index i = 0; i < moved.size(); ++i) {
        const double s = problem.step_for(static_cast<std::size_t>(i), out.x(i)) / kFdStep;
        rel_move = std::max(rel_move, std::abs(moved(i)) / s);
      }
      if (rel_move < 1e-12) {
        out.converged = true;
        return out;
      }
      const Evaluation e = problem.evaluate_one(trial);
      if (e.chi2 < out.best.chi2) {
        const double gain = out.best.chi2 - e.chi2;
        const double previous = out.best.chi2;
        out.x = trial;
        out.best = e;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (gain <= tol * previous) {
          out.converged = true;
          return out;
        }
      } else {
        lambda *= 4.0;
        if (lambda > 1e12) {
          out.converged = true;  // no descent left along any damped direction
          out.note = "damping limit reached";
          return out;
        }
      }
    }
  }
}

std::map<FitParam, double> uncertainties(Problem& problem, const FitConfig& config,
                                         const Vec& x, const Evaluation& at) {
  std::map<FitParam, double> out;
  const std::size_t n = problem.dims();
  const std::size_t m = at.residuals.size();
  if (n == 0 || m <= n || !std::isfinite(at.chi2)) return out;
  const Eigen::MatrixXd jac = problem.jacobian(x, at);
  const Eigen::MatrixXd jtj = jac.transpose() * jac;
  const Eigen::MatrixXd cov =
      jtj.completeOrthogonalDecomposition().pseudoInverse() *
      (at.chi2 / static_cast<double>(m - n));
  for (std::size_t i = 0; i < n; ++i) {
    const double var = cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    out[config.free_params[i]] = std::sqrt(std::max(var, 0.0));
  }
  return out;
}

}  // namespace

FitResult fit(const SpectrumSeries& data, const FitConfig& config) {
  config.validate();
  if (data.size() < 16) fail_validation("fitting needs at least 16 data points");

  FitResult result;
  result.laser_power = config.initial.model.laser_power;
  const double peak = data.peak();
  if (!(peak > 0.0)) fail_validation("data have no positive intensity");
  result.data_scale = config.normalize ? peak : 1.0;

  std::vector<double> values = data.values();
  for (double& v : values) v /= result.data_scale;
  std::vector<double> weights;
  if (config.use_weights && !data.weights().empty()) {
    weights = data.weights();
    for (double& w : weights) w *= result.data_scale * result.data_scale;
  }
  const SpectrumSeries normalized(data.delta_grid(), std::move(values), data.kind(),
                                  data.weights());

  int fock_dim = config.fock_dim
                     ? *config.fock_dim
                     : converge_truncation(config.initial.model, 1e-6).d_star;

  Vec x;
  for (int round = 0;; ++round) {
    Problem problem(normalized, weights, config, fock_dim);
    if (round == 0) x = problem.start();
    OptimizerOutcome outcome;
    if (problem.dims() == 0) {
      outcome.x = x;
      outcome.best = problem.evaluate_one(x);
      outcome.converged = true;
    } else if (config.optimizer == Optimizer::nelder_mead) {
      outcome = nelder_mead(problem, x, config.tolerance);
    } else {
      outcome = levenberg_marquardt(problem, x, config.tolerance);
    }
    x = outcome.x;
    result.params = problem.point(x);
    result.chi2 = outcome.best.chi2;
    result.n_points = outcome.best.residuals.size();
    result.converged = outcome.converged;
    result.evaluations += problem.evaluations();
    result.trace.insert(result.trace.end(), problem.trace().begin(), problem.trace().end());
    if (!outcome.note.empty()) result.diagnostics.push_back(outcome.note);
    result.fock_dim = fock_dim;
    if (!std::isfinite(result.chi2)) fail_numerical("fit ended at an infeasible point");

    if (config.fock_dim) {
      result.uncertainties = uncertainties(problem, config, x, outcome.best);
      break;
    }
    const int recheck = converge_truncation(result.params.model, 1e-6).d_star;
    if (recheck <= fock_dim || round >= 2) {
      if (recheck > fock_dim) {
        result.diagnostics.push_back("truncation still grows at the optimum (D* = " +
                                     std::to_string(recheck) + ")");
      }
      result.uncertainties = uncertainties(problem, config, x, outcome.best);
      break;
    }
    result.diagnostics.push_back("refit with D = " + std::to_string(recheck) +
                                 " (was " + std::to_string(fock_dim) + ")");
    fock_dim = recheck;
  }
  // keep the trace monotone across refits
  for (std::size_t k = 1; k < result.trace.size(); ++k) {
    result.trace[k] = std::min(result.trace[k], result.trace[k - 1]);
  }
  result.params.model.fock_dim = fock_dim;

  for (std::size_t i = 0; i < config.free_params.size(); ++i) {
    const FitParam p = config.free_params[i];
    const Bounds b = config.bounds_for(p);
    const double v = result.params.get(p);
    const auto near = [v](double bound) {
      return std::abs(v - bound) <= 1e-9 * std::max({std::abs(bound), std::abs(v), 1e-300});
    };
    if (near(b.low) || near(b.high)) {
      result.at_bound.push_back(p);
      result.diagnostics.push_back("parameter '" + std::string(to_string(p)) +
                                   "' is pinned at a bound");
    }
  }
  return result;
}

}  // namespace kerrsf
