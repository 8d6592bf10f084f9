#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kerrsf/medium_optics.hpp"
#include "kerrsf/spectrum.hpp"

namespace kerrsf {

/// Parses "delta<sep>intensity[<sep>weight]" rows (sep = tab or comma, '#'
/// comments, blank lines ignored). Errors name the offending line.
SpectrumSeries parse_spectrum(std::istream& in, std::string_view source_name,
                              std::size_t min_points = 16);
SpectrumSeries load_spectrum(const std::filesystem::path& path, std::size_t min_points = 16);

/// Picks columns out of a wider table (e.g. simulate output). Rows may carry
/// extra fields.
struct SpectrumColumns {
  std::size_t delta = 0;
  std::size_t intensity = 1;
  std::optional<std::size_t> weight;
};

SpectrumSeries parse_spectrum(std::istream& in, std::string_view source_name,
                              const SpectrumColumns& columns, std::size_t min_points = 16);
SpectrumSeries load_spectrum(const std::filesystem::path& path, const SpectrumColumns& columns,
                             std::size_t min_points = 16);

enum class FitParam { rabi, kerr, delta, gamma, f, scale, background };

inline constexpr std::array<FitParam, 7> kAllFitParams{
    FitParam::rabi, FitParam::kerr,  FitParam::delta,     FitParam::gamma,
    FitParam::f,    FitParam::scale, FitParam::background};

std::string_view to_string(FitParam p);
FitParam fit_param_from_string(std::string_view name);

/// Everything the forward model needs. The medium shares delta and gamma
/// with the exciton model; sync() copies them across.
struct ModelPoint {
  CollectiveModelParams model;
  MediumParams medium;
  double gamma_f = 0.0107;  // detector FWHM, meV; never fitted

  void sync();
  double get(FitParam p) const;
  void set(FitParam p, double value);
};

/// scale * a(D) * S_W(D) + background on a uniform grid.
SpectrumSeries forward_model(ModelPoint point, std::span<const double> model_grid);

/// Default model grid: uniform over the data range with as many points as the
/// data (identical points when the data grid is itself uniform).
std::vector<double> default_model_grid(const SpectrumSeries& data);

/// sum_k w_k (S_model(D_k) - S_data(D_k))^2 with S_model linearly
/// interpolated onto the data points. Points inside an exclusion window are
/// skipped. Validation error when the data extend beyond the model grid.
double objective(const SpectrumSeries& data, const SpectrumSeries& model,
                 std::span<const double> weights,
                 std::span<const std::pair<double, double>> exclusions = {});
double objective(const SpectrumSeries& data, const ModelPoint& point,
                 std::span<const double> weights, std::span<const double> model_grid,
                 std::span<const std::pair<double, double>> exclusions = {});

struct Bounds {
  double low = 0.0;
  double high = 0.0;
};

Bounds default_bounds(FitParam p);

enum class Optimizer { nelder_mead, levenberg_marquardt };

std::string_view to_string(Optimizer o);
Optimizer optimizer_from_string(std::string_view name);

struct FitConfig {
  std::vector<FitParam> free_params;
  ModelPoint initial;  // start values for free parameters, values of fixed ones
  std::map<FitParam, Bounds> bounds;  // missing entries use default_bounds
  std::optional<int> fock_dim;        // empty: converge_truncation(initial, 1e-6)
  Optimizer optimizer = Optimizer::nelder_mead;
  int max_evals = 3000;
  double tolerance = 1e-9;  // relative objective change at convergence
  bool use_weights = true;  // use the data's weight column when present
  bool normalize = true;    // divide data by its peak before fitting
  std::vector<std::pair<double, double>> exclusions;

  Bounds bounds_for(FitParam p) const;
  void validate() const;
};

struct FitResult {
  ModelPoint params;
  std::optional<double> laser_power;
  double chi2 = 0.0;
  std::size_t n_points = 0;
  std::map<FitParam, double> uncertainties;
  bool converged = false;
  std::vector<double> trace;  // best-so-far objective after every evaluation
  std::vector<std::string> diagnostics;
  std::vector<FitParam> at_bound;
  int evaluations = 0;
  int fock_dim = 0;
  double data_scale = 1.0;  // the data were divided by this before fitting
};

/// Deterministic for fixed data and config.
FitResult fit(const SpectrumSeries& data, const FitConfig& config);

}  // namespace kerrsf
