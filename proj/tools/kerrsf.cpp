#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "kerrsf/collective_sf.hpp"
#include "kerrsf/correlations.hpp"
#include "kerrsf/dynamics.hpp"
#include "kerrsf/error.hpp"
#include "kerrsf/fit_engine.hpp"
#include "kerrsf/io.hpp"
#include "kerrsf/medium_optics.hpp"

using namespace kerrsf;

namespace {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kValidation = 2,
  kNumerical = 3,
  kScaleGuard = 4,
  kIo = 5,
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return kValidation;
    case ErrorKind::numerical: return kNumerical;
    case ErrorKind::scale_guard: return kScaleGuard;
    case ErrorKind::io: return kIo;
  }
  return kUnexpected;
}

// Runs one pipeline stage, prefixing any error with the stage name.
template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(name) + ": " + e.what());
  }
}

std::string num(double v) { return format_double(v); }

std::filesystem::path output_path(const Config& config, const std::string& fallback) {
  return resolve_output(config.get_string("run.output", fallback));
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const Config& config) {
  const auto model = stage("config", [&] { return model_from_config(config); });
  const auto medium = stage("config", [&] { return medium_from_config(config, model); });
  const auto grid = stage("config", [&] { return grid_from_config(config); });
  const double gamma_f = stage("config", [&] { return gamma_f_from_config(config); });
  const bool full = config.get_bool("detector.full_convolution", false);
  const std::string format = config.get_string("run.format", "csv");
  if (format != "csv" && format != "structured-text") {
    fail_validation("run.format must be csv or structured-text");
  }
  // Checked before the expensive stages.
  std::optional<std::uint64_t> seed;
  if (config.has("noise.relative")) seed = seed_from_config(config);

  const auto internal =
      stage("internal spectrum", [&] { return internal_spectrum(model, grid, gamma_f, full); });
  const auto absorb = stage("absorption", [&] { return absorption(grid, medium); });
  const auto output =
      stage("output spectrum", [&] { return output_spectrum(internal.total, absorb, medium); });

  const std::vector<std::string> header = {
      "kerrsf simulate",
      "delta=" + num(model.delta) + " rabi=" + num(model.rabi) + " kerr=" + num(model.kerr) +
          " gamma=" + num(model.gamma) + " fock_dim=" + std::to_string(model.fock_dim),
      "medium mode=" + std::string(to_string(medium.mode)) + " f=" + num(medium.f) +
          " scale=" + num(medium.scale) + " background=" + num(medium.background) +
          " gamma_f=" + num(gamma_f),
      "occupation=" + num(internal.occupation) + " mean_field=" + num(internal.mean_field.real()) +
          (internal.mean_field.imag() < 0 ? "" : "+") + num(internal.mean_field.imag()) + "i",
      "asymmetry S_internal=" + num(asymmetry_functional(internal.total)) +
          " S_output=" + num(asymmetry_functional(output)),
      "units: delta in meV; intensities a.u."};
  const std::vector<std::string> columns = {"delta_meV", "S_internal", "a", "S_output"};
  const std::vector<std::vector<double>> data = {grid, internal.total.values(), absorb.values(),
                                                 output.values()};
  const auto path = output_path(config, "simulate.csv");
  if (format == "csv") {
    atomic_write(path, table_text(header, columns, data));
  } else {
    std::ostringstream out;
    out << "[summary]\n";
    for (std::size_t k = 1; k < header.size(); ++k) out << "line_" << k << " = " << header[k] << "\n";
    out << "occupation = " << num(internal.occupation) << "\n";
    out << "fock_dim = " << model.fock_dim << "\n";
    out << "\n[spectrum]\n";
    for (std::size_t c = 0; c < columns.size(); ++c) {
      out << columns[c] << " = ";
      for (std::size_t r = 0; r < grid.size(); ++r) out << (r ? ", " : "") << num(data[c][r]);
      out << "\n";
    }
    atomic_write(path, out.str());
  }
  std::cout << "wrote " << path.string() << " (D=" << model.fock_dim
            << ", occupation=" << num(internal.occupation) << ")\n";

  if (seed) {
    const double rel = config.get_double("noise.relative");
    if (!(rel > 0.0)) fail_validation("noise.relative must be positive");
    std::mt19937_64 rng(*seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> noisy(grid.size()), weight(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double y = output.values()[k];
      noisy[k] = std::max(0.0, y * (1.0 + rel * gauss(rng)));
      const double sigma = rel * y;
      weight[k] = sigma > 0.0 ? 1.0 / (sigma * sigma) : 0.0;
    }
    const auto noise_path = resolve_output(config.get_string("noise.output", "synthetic.csv"));
    atomic_write(noise_path,
                 table_text({"synthetic data: S_output with " + num(rel) +
                                 " relative gaussian noise, seed " + std::to_string(*seed),
                             "weight = 1/(relative * S_output)^2"},
                            {"delta_meV", "intensity", "weight"}, {grid, noisy, weight}));
    std::cout << "wrote " << noise_path.string() << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------- fit

int cmd_fit(const Config& config) {
  const auto data = stage("data", [&] { return load_spectrum(config.get_string("fit.data")); });
  const auto fc = stage("config", [&] { return fit_config_from_config(config); });
  const auto result = stage("fit", [&] { return fit(data, fc); });
  const auto path = output_path(config, "fit_report.txt");
  atomic_write(path, fit_report(result, fc, config.get_string("fit.data")));
  std::cout << "wrote " << path.string() << " chi2=" << num(result.chi2)
            << " converged=" << (result.converged ? "true" : "false") << "\n";
  for (const auto& line : result.diagnostics) std::cout << "note: " << line << "\n";
  return kOk;
}

// ---------------------------------------------------------------- sf-test

int cmd_sf_test(const Config& config) {
  std::vector<std::string> paths;
  if (config.has("sf.reports")) {
    std::stringstream list(config.get_string("sf.reports"));
    for (std::string item; std::getline(list, item, ',');) {
      const auto first = item.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      paths.push_back(item.substr(first, item.find_last_not_of(" \t") - first + 1));
    }
  }
  if (paths.size() < 2) fail_validation("sf-test needs at least two fit reports");
  std::vector<CollectiveModelParams> fits;
  for (const auto& p : paths) fits.push_back(read_fit_report(p));
  const auto thresholds = thresholds_from_config(config);
  const auto reports = stage("sf ratio", [&] { return sf_sequence(fits, thresholds); });
  const SFClass verdict = sf_verdict(reports);
  const auto path = output_path(config, "sf_report.txt");
  atomic_write(path, sf_report(reports, verdict, thresholds));
  for (const auto& r : reports) {
    std::printf("P %g -> %g: lhs %.4f kerr_ratio %.4f %s\n", r.power_1, r.power_2, r.lhs,
                r.kerr_ratio, std::string(to_string(r.classification)).c_str());
  }
  std::cout << "verdict: " << to_string(verdict) << "\n";
  return kOk;
}

// ---------------------------------------------------------------- oracle

int cmd_oracle(const Config& config) {
  const auto multi = stage("config", [&] { return multimode_from_config(config); });
  const bool with_spectrum = config.has("grid.points");
  std::vector<double> grid;
  if (with_spectrum) grid = grid_from_config(config);
  const double gamma_f = gamma_f_from_config(config);

  auto collective = collective_reduce(multi);
  auto literal = collective;
  literal.kerr = multi.kerr_single;
  const auto pick_dim = [&](CollectiveModelParams& p) {
    if (config.get_string("oracle.collective_dim", "auto") == "auto") {
      p.fock_dim = converge_truncation(p, 1e-10).d_star;
    } else {
      p.fock_dim = static_cast<int>(config.get_long("oracle.collective_dim", 0));
    }
  };
  stage("collective model", [&] {
    pick_dim(collective);
    pick_dim(literal);
  });

  const auto oracle = stage("multi-mode oracle", [&] {
    return oracle_multimode_steady(multi, std::span<const double>(grid));
  });

  struct Side {
    double occupation = 0.0;
    std::optional<SpectrumSeries> spectrum;
  };
  const auto run_collective = [&](const CollectiveModelParams& p) {
    Side s;
    if (with_spectrum) {
      auto sp = internal_spectrum(p, grid, gamma_f);
      s.occupation = sp.occupation;
      s.spectrum = sp.incoherent;
    } else {
      const auto gen = build_sparse_generator(p);
      const auto rho = steady_state(gen, p.fock_dim);
      s.occupation = expectation(number(p.fock_dim), rho).real();
    }
    return s;
  };
  const Side reduced = stage("collective model", [&] { return run_collective(collective); });
  const Side lit = stage("collective model", [&] { return run_collective(literal); });

  const auto compare = [&](const Side& side, std::ostringstream& out) {
    const double abs_dev = std::abs(side.occupation - oracle.occupation_collective);
    out << "occupation_collective = " << num(side.occupation) << "\n";
    out << "occupation_abs_deviation = " << num(abs_dev) << "\n";
    if (oracle.occupation_collective > 1e-14) {
      out << "occupation_rel_deviation = " << num(abs_dev / oracle.occupation_collective) << "\n";
    }
    if (side.spectrum && oracle.spectrum) {
      const auto& a = side.spectrum->values();
      const auto& b = oracle.spectrum->values();
      double peak = 0.0, dev = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        peak = std::max(peak, std::abs(b[k]));
        dev = std::max(dev, std::abs(a[k] - b[k]));
      }
      out << "spectrum_max_abs_deviation = " << num(dev) << "\n";
      if (peak > 0.0) out << "spectrum_deviation_over_peak = " << num(dev / peak) << "\n";
    }
    return abs_dev;
  };

  std::ostringstream out;
  out << "[report]\nkind = oracle\nunits = energies in meV\n\n[multimode]\n";
  out << "n_modes = " << multi.n_modes << "\ndim_per_mode = " << multi.dim_per_mode
      << "\ntotal_dim = " << oracle.total_dim << "\nphases = ";
  for (std::size_t k = 0; k < multi.phases.size(); ++k) out << (k ? ", " : "") << num(multi.phases[k]);
  out << "\nrabi_single = " << num(multi.rabi_single) << "\nkerr_single = " << num(multi.kerr_single)
      << "\noccupation = " << num(oracle.occupation_collective) << "\nmax_top_population = ";
  double top = 0.0;
  for (double t : oracle.top_population) top = std::max(top, t);
  out << num(top) << "\n\n[collective]\nrabi = " << num(collective.rabi)
      << "\nkerr = " << num(collective.kerr) << "\nfock_dim = " << collective.fock_dim << "\n";
  const double dev = compare(reduced, out);
  out << "\n[literal_kerr]\nrabi = " << num(literal.rabi) << "\nkerr = " << num(literal.kerr)
      << "\nfock_dim = " << literal.fock_dim << "\n";
  const double lit_dev = compare(lit, out);

  const auto path = output_path(config, "oracle_comparison.txt");
  atomic_write(path, out.str());
  if (with_spectrum && config.has("oracle.spectrum_output")) {
    const auto sp = resolve_output(config.get_string("oracle.spectrum_output"));
    atomic_write(sp, table_text({"incoherent spectra of the collective operator"},
                                {"delta_meV", "S_collective", "S_literal_kerr", "S_oracle"},
                                {grid, reduced.spectrum->values(), lit.spectrum->values(),
                                 oracle.spectrum->values()}));
  }
  std::cout << "wrote " << path.string() << " occupation oracle=" << num(oracle.occupation_collective)
            << " collective=" << num(reduced.occupation) << " (abs dev " << num(dev)
            << "; with kerr=G: " << num(lit_dev) << ")\n";
  return kOk;
}

// ---------------------------------------------------------------- convergence

int cmd_convergence(Config config) {
  if (!config.has("model.fock_dim")) config.set("model.fock_dim", "2");
  CollectiveModelParams p;
  p.delta = config.get_double("model.delta");
  p.rabi = config.get_double("model.rabi");
  p.kerr = config.get_double("model.kerr");
  p.gamma = config.get_double("model.gamma");
  p.validate();
  TruncationSchedule schedule;
  schedule.start = static_cast<int>(config.get_long("convergence.start", schedule.start));
  schedule.step = static_cast<int>(config.get_long("convergence.step", schedule.step));
  schedule.lookahead =
      static_cast<int>(config.get_long("convergence.lookahead", schedule.lookahead));
  schedule.max_dim = static_cast<int>(config.get_long("convergence.max_dim", schedule.max_dim));
  const double tol = config.get_double("convergence.tolerance", 1e-6);
  const auto report = stage("truncation", [&] { return converge_truncation(p, tol, schedule); });
  std::vector<double> dims, occ, tail;
  for (const auto& s : report.samples) {
    dims.push_back(s.dim);
    occ.push_back(s.occupation);
    tail.push_back(s.tail_population);
  }
  const auto path = output_path(config, "convergence.csv");
  atomic_write(path, table_text({"kerrsf convergence", "tolerance=" + num(tol),
                                 "d_star=" + std::to_string(report.d_star)},
                                {"fock_dim", "occupation", "tail_population"}, {dims, occ, tail}));
  std::cout << "d_star = " << report.d_star << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Driven Kerr exciton emission: simulate, fit, oracle and superfluorescence tests"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string output, format, data_path;
  std::optional<long> seed;
  std::optional<int> fock_dim;
  std::vector<std::string> reports;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "configuration file (INI)");
    sub->add_option("-s,--set", overrides, "override, section.key=value (repeatable)");
    sub->add_option("-o,--output", output, "output path (run.output)");
    sub->add_option("--seed", seed, "random seed (run.seed)");
  };
  auto* simulate = app.add_subcommand("simulate", "internal, absorption and output spectra");
  common(simulate);
  simulate->add_option("--format", format, "csv or structured-text (run.format)");
  simulate->add_option("--fock-dim", fock_dim, "Fock truncation (model.fock_dim)");
  auto* fit_cmd = app.add_subcommand("fit", "fit a measured spectrum");
  common(fit_cmd);
  fit_cmd->add_option("--data", data_path, "spectrum file (fit.data)");
  fit_cmd->add_option("--fock-dim", fock_dim, "Fock truncation (fit.fock_dim)");
  auto* sf = app.add_subcommand("sf-test", "superfluorescence test over fit reports");
  common(sf);
  sf->add_option("reports", reports, "fit reports (sf.reports)");
  auto* oracle = app.add_subcommand("oracle", "multi-mode oracle vs collective model");
  common(oracle);
  auto* conv = app.add_subcommand("convergence", "Fock truncation convergence table");
  common(conv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    Config config = config_path.empty() ? Config{} : Config::load(config_path);
    for (const auto& o : overrides) config.apply_override(o);
    if (!output.empty()) config.set("run.output", output);
    if (seed) config.set("run.seed", std::to_string(*seed));
    if (!format.empty()) config.set("run.format", format);
    if (!data_path.empty()) config.set("fit.data", data_path);
    if (fock_dim) {
      config.set(fit_cmd->parsed() ? "fit.fock_dim" : "model.fock_dim", std::to_string(*fock_dim));
    }
    if (!reports.empty()) {
      std::string joined;
      for (const auto& r : reports) joined += (joined.empty() ? "" : ", ") + r;
      config.set("sf.reports", joined);
    }

    if (simulate->parsed()) return cmd_simulate(config);
    if (fit_cmd->parsed()) return cmd_fit(config);
    if (sf->parsed()) return cmd_sf_test(config);
    if (oracle->parsed()) return cmd_oracle(config);
    if (conv->parsed()) return cmd_convergence(config);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnexpected;
  }
  return kUnexpected;
}
