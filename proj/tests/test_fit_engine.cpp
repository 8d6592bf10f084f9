#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kerrsf/error.hpp"
#include "kerrsf/fit_engine.hpp"

using namespace kerrsf;

namespace {

std::string error_of(const std::string& text, std::size_t min_points = 3) {
  std::istringstream in(text);
  try {
    parse_spectrum(in, "data.csv", min_points);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

ModelPoint column3() {
  ModelPoint p;
  p.model.delta = 0.09;
  p.model.rabi = 0.16;
  p.model.kerr = 0.45;
  p.model.gamma = 0.22;
  p.model.laser_power = 310.0;
  p.model.fock_dim = 10;
  p.medium.f = 0.9;
  p.medium.mode = AbsorptionMode::slab;
  p.sync();
  return p;
}

SpectrumSeries as_data(const SpectrumSeries& s) {
  return SpectrumSeries(s.delta_grid(), s.values(), SpectrumKind::experimental);
}

FitConfig small_config(const ModelPoint& start) {
  FitConfig c;
  c.initial = start;
  c.fock_dim = 10;
  c.optimizer = Optimizer::levenberg_marquardt;
  c.max_evals = 400;
  c.normalize = false;
  return c;
}

}  // namespace

TEST_CASE("spectrum ingestion") {
  SUBCASE("well-formed three-row file") {
    std::istringstream in("# delta, intensity\n-0.1,1.0\n0.0\t2.5\n\n0.1, 1.5\n");
    const auto s = parse_spectrum(in, "three", 3);
    CHECK(s.size() == 3);
    CHECK(s.values()[1] == 2.5);
    CHECK(s.kind() == SpectrumKind::experimental);
    CHECK(s.weights().empty());
  }
  SUBCASE("weight column") {
    std::istringstream in("-0.1,1.0,4\n0.0,2.5,1\n0.1,1.5,0.5\n");
    const auto s = parse_spectrum(in, "w", 3);
    CHECK(s.weights() == std::vector<double>{4, 1, 0.5});
  }
  SUBCASE("errors name the line") {
    CHECK(error_of("0.0,1\n0.2,1\n0.1,1\n").find("data.csv:3") != std::string::npos);
    CHECK(error_of("0.0,1\n0.2,1\n0.1,1\n").find("ascending") != std::string::npos);
    CHECK(error_of("0.0,1\n0.1,nan\n0.2,1\n").find("data.csv:2") != std::string::npos);
    CHECK(error_of("0.0,1\n0.1,1;\n0.2,1\n").find("malformed") != std::string::npos);
    CHECK(error_of("0.0,1\n0.1,1,2,3\n0.2,1\n").find("columns") != std::string::npos);
    CHECK(error_of("0.0,1\n0.1,-1\n0.2,1\n").find("negative") != std::string::npos);
    CHECK(error_of("0.0,1\n0.1,1\n0.2,1\n", 16).find("at least 16") != std::string::npos);
    CHECK(error_of("1,000.5,2\n").size() > 0);
  }
  SUBCASE("column selection from a wider table") {
    std::istringstream in("# a,b,c,d\n0,1,2,3\n1,5,6,7\n2,9,10,11\n");
    const auto s = parse_spectrum(in, "wide", SpectrumColumns{0, 2, std::nullopt}, 3);
    CHECK(s.values() == std::vector<double>{2, 6, 10});
  }
  SUBCASE("missing file") {
    try {
      load_spectrum("/nonexistent/spectrum.csv");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::io);
    }
  }
}

TEST_CASE("parameter names") {
  for (FitParam p : kAllFitParams) CHECK(fit_param_from_string(to_string(p)) == p);
  CHECK_THROWS_AS(fit_param_from_string("omega"), Error);
  CHECK(optimizer_from_string("nelder_mead") == Optimizer::nelder_mead);
  CHECK(optimizer_from_string("levenberg_marquardt") == Optimizer::levenberg_marquardt);
}

TEST_CASE("objective") {
  const ModelPoint truth = column3();
  const auto grid = uniform_grid(-1.0, 1.0, 41);
  const auto data = as_data(forward_model(truth, grid));
  const std::vector<double> ones(grid.size(), 1.0), twos(grid.size(), 2.0);

  double sumsq = 0.0;
  for (double v : data.values()) sumsq += v * v;
  const double self = objective(data, truth, ones, grid);
  CHECK(self < 1e-10 * sumsq);

  ModelPoint off = truth;
  off.set(FitParam::rabi, 0.176);
  const double chi = objective(data, off, ones, grid);
  CHECK(chi > 0.0);
  CHECK(objective(data, off, twos, grid) == doctest::Approx(2.0 * chi).epsilon(1e-14));

  const auto narrow = uniform_grid(-0.5, 0.5, 21);
  CHECK_THROWS_AS(objective(data, truth, ones, narrow), Error);

  // exclusion windows drop points
  const std::vector<std::pair<double, double>> cut = {{-0.2, 0.2}};
  CHECK(objective(data, off, ones, grid, cut) < chi);
}

TEST_CASE("zero free parameters return the start point") {
  const ModelPoint truth = column3();
  const auto grid = uniform_grid(-1.0, 1.0, 41);
  const auto data = as_data(forward_model(truth, grid));
  auto cfg = small_config(truth);
  cfg.initial.set(FitParam::kerr, 0.4);
  const auto r = fit(data, cfg);
  CHECK(r.converged);
  CHECK(r.params.get(FitParam::kerr) == 0.4);
  const std::vector<double> ones(grid.size(), 1.0);
  CHECK(r.chi2 == doctest::Approx(objective(data, cfg.initial, ones, default_model_grid(data))));
  CHECK(r.laser_power == 310.0);
}

TEST_CASE("two-parameter recovery, trace and reproducibility") {
  const ModelPoint truth = column3();
  const auto grid = uniform_grid(-1.0, 1.0, 41);
  const auto data = as_data(forward_model(truth, grid));
  ModelPoint start = truth;
  start.set(FitParam::kerr, 0.5);
  start.set(FitParam::rabi, 0.15);
  for (Optimizer opt : {Optimizer::levenberg_marquardt, Optimizer::nelder_mead}) {
    auto cfg = small_config(start);
    cfg.optimizer = opt;
    cfg.free_params = {FitParam::rabi, FitParam::kerr};
    const auto r = fit(data, cfg);
    CHECK(r.converged);
    CHECK(r.params.get(FitParam::kerr) == doctest::Approx(0.45).epsilon(1e-3));
    CHECK(r.params.get(FitParam::rabi) == doctest::Approx(0.16).epsilon(1e-3));
    for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k] <= r.trace[k - 1]);
    CHECK(r.uncertainties.size() == 2);

    const auto again = fit(data, cfg);
    CHECK(again.chi2 == r.chi2);
    CHECK(again.params.get(FitParam::kerr) == r.params.get(FitParam::kerr));
    CHECK(again.trace == r.trace);
  }
}

TEST_CASE("truth outside the box pins the fit at a bound") {
  const ModelPoint truth = column3();
  const auto grid = uniform_grid(-1.0, 1.0, 41);
  const auto data = as_data(forward_model(truth, grid));
  ModelPoint start = truth;
  start.set(FitParam::kerr, 0.3);
  auto cfg = small_config(start);
  cfg.free_params = {FitParam::kerr};
  cfg.bounds[FitParam::kerr] = Bounds{0.2, 0.35};
  const auto r = fit(data, cfg);
  CHECK(r.params.get(FitParam::kerr) == doctest::Approx(0.35));
  REQUIRE(r.at_bound.size() == 1);
  CHECK(r.at_bound[0] == FitParam::kerr);
  CHECK(std::any_of(r.diagnostics.begin(), r.diagnostics.end(),
                    [](const std::string& s) { return s.find("kerr") != std::string::npos; }));
}

TEST_CASE("a parameter whose truth lies on its bound does not stall the other steps") {
  // background truth 0 equals its lower bound
  const ModelPoint truth = column3();
  const auto grid = uniform_grid(-1.0, 1.0, 41);
  const auto data = as_data(forward_model(truth, grid));
  ModelPoint start = truth;
  start.set(FitParam::kerr, 0.4);
  start.set(FitParam::rabi, 0.17);
  auto cfg = small_config(start);
  cfg.free_params = {FitParam::rabi, FitParam::kerr, FitParam::background};
  const auto r = fit(data, cfg);
  CHECK(r.converged);
  CHECK(r.evaluations < 200);
  CHECK(r.params.get(FitParam::background) == 0.0);
  CHECK(r.params.get(FitParam::kerr) == doctest::Approx(0.45).epsilon(1e-4));
  CHECK(r.params.get(FitParam::rabi) == doctest::Approx(0.16).epsilon(1e-4));
}

TEST_CASE("scale gauge") {
  const ModelPoint truth = column3();
  const auto grid = uniform_grid(-1.0, 1.0, 41);
  const auto base = forward_model(truth, grid);
  std::vector<double> scaled = base.values();
  for (double& v : scaled) v *= 7.0;
  const SpectrumSeries data(grid, scaled, SpectrumKind::experimental);
  ModelPoint p = truth;
  p.set(FitParam::scale, 7.0);
  const std::vector<double> ones(grid.size(), 1.0);
  CHECK(objective(data, p, ones, grid) < 1e-20 * 49.0);

  // normalization makes the fitted scale relative to the data peak
  auto cfg = small_config(truth);
  cfg.free_params = {FitParam::scale};
  cfg.normalize = true;
  const auto r = fit(data, cfg);
  CHECK(r.data_scale == doctest::Approx(data.peak()));
  CHECK(r.params.get(FitParam::scale) * r.data_scale == doctest::Approx(7.0).epsilon(1e-6));
}

TEST_CASE("config validation") {
  FitConfig cfg;
  cfg.initial = column3();
  cfg.free_params = {FitParam::kerr, FitParam::kerr};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.free_params = {FitParam::kerr};
  cfg.bounds[FitParam::kerr] = Bounds{0.5, 1.0};
  CHECK_THROWS_AS(cfg.validate(), Error);  // start outside bounds
  cfg.bounds[FitParam::kerr] = Bounds{0.0, 1.0};
  cfg.max_evals = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
