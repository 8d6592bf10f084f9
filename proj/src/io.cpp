#include "kerrsf/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

#include "kerrsf/dynamics.hpp"
#include "kerrsf/error.hpp"

#include <unistd.h>

namespace kerrsf {

namespace pt = boost::property_tree;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t k = 0; k <= text.size(); ++k) {
    if (k == text.size() || text[k] == ',') {
      auto item = trim(text.substr(start, k - start));
      if (!item.empty()) out.push_back(std::move(item));
      start = k + 1;
    }
  }
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    fail_validation(key + ": expected a number, got '" + text + "'");
  }
  return value;
}

// Every key a config may contain. Unknown keys are errors so typos surface.
const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "run.command", "run.output", "run.format", "run.seed",
      "model.delta", "model.rabi", "model.kerr", "model.gamma", "model.fock_dim",
      "model.laser_power",
      "medium.f", "medium.mode", "medium.slab_phase_thickness", "medium.a_max",
      "medium.background", "medium.scale",
      "detector.gamma_f", "detector.full_convolution",
      "grid.min", "grid.max", "grid.points",
      "noise.relative", "noise.output",
      "fit.data", "fit.free", "fit.optimizer", "fit.max_evals", "fit.tolerance",
      "fit.use_weights", "fit.normalize", "fit.fock_dim", "fit.exclude",
      "fit.bound_rabi", "fit.bound_kerr", "fit.bound_delta", "fit.bound_gamma",
      "fit.bound_f", "fit.bound_scale", "fit.bound_background",
      "oracle.n_modes", "oracle.rabi_single", "oracle.phases", "oracle.kerr_single",
      "oracle.delta", "oracle.gamma", "oracle.dim_per_mode", "oracle.collective_dim",
      "oracle.spectrum_output",
      "sf.reports", "sf.margin", "sf.threshold_sf",
      "convergence.tolerance", "convergence.start", "convergence.step",
      "convergence.lookahead", "convergence.max_dim"};
  return keys;
}

void check_keys(const pt::ptree& tree, std::string_view source) {
  const auto& known = known_keys();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      fail_validation(std::string(source) + ": key '" + section + "' outside a section");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (std::find(known.begin(), known.end(), full) == known.end()) {
        fail_validation(std::string(source) + ": unknown key '" + full + "'");
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- files

std::filesystem::path resolve_output(const std::filesystem::path& path) {
  const char* dir = std::getenv(kOutputDirEnv);
  if (dir == nullptr || *dir == '\0' || path.is_absolute()) return path;
  return std::filesystem::path(dir) / path;
}

void atomic_write(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create directory " + parent.string());
  const fs::path tmp =
      parent / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorKind::io, "cannot rename onto " + path.string());
  }
}

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

// ---------------------------------------------------------------- config

Config Config::parse(std::string_view text, std::string_view source) {
  Config config;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, config.tree_);
  } catch (const pt::ini_parser_error& e) {
    fail_validation(std::string(source) + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  check_keys(config.tree_, source);
  return config;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path.string());
}

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    fail_validation("override '" + std::string(assignment) + "' is not section.key=value");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  const auto& known = known_keys();
  if (std::find(known.begin(), known.end(), key) == known.end()) {
    fail_validation("unknown key '" + key + "'");
  }
  tree_.put(key, value);
}

bool Config::has(const std::string& key) const {
  const auto v = tree_.get_optional<std::string>(key);
  return v && !trim(*v).empty();
}

std::string Config::get_string(const std::string& key) const {
  if (!has(key)) fail_validation("missing required key '" + key + "'");
  return trim(tree_.get<std::string>(key));
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double Config::get_double(const std::string& key) const {
  return to_double(key, get_string(key));
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long Config::get_long(const std::string& key, long fallback) const {
  if (!has(key)) return fallback;
  const std::string text = get_string(key);
  long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail_validation(key + ": expected an integer, got '" + text + "'");
  }
  return value;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string text = get_string(key);
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  fail_validation(key + ": expected true or false, got '" + text + "'");
}

std::vector<double> Config::get_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get_string(key))) out.push_back(to_double(key, item));
  return out;
}

std::string Config::dump() const {
  std::ostringstream out;
  pt::write_ini(out, tree_);
  return out.str();
}

// ------------------------------------------------------- config -> params

CollectiveModelParams model_from_config(const Config& config) {
  CollectiveModelParams p;
  p.delta = config.get_double("model.delta");
  p.rabi = config.get_double("model.rabi");
  p.kerr = config.get_double("model.kerr");
  p.gamma = config.get_double("model.gamma");
  if (config.has("model.laser_power")) p.laser_power = config.get_double("model.laser_power");
  const std::string dim = config.get_string("model.fock_dim", "auto");
  if (dim == "auto") {
    p.fock_dim = 2;
    p.validate();
    p.fock_dim = converge_truncation(p, 1e-6).d_star;
  } else {
    p.fock_dim = static_cast<int>(config.get_long("model.fock_dim", 0));
  }
  p.validate();
  return p;
}

MediumParams medium_from_config(const Config& config, const CollectiveModelParams& model) {
  MediumParams m;
  m.delta_res = model.delta;
  m.gamma = model.gamma;
  m.f = config.get_double("medium.f", m.f);
  m.mode = absorption_mode_from_string(
      config.get_string("medium.mode", std::string(to_string(m.mode))));
  m.slab_phase_thickness =
      config.get_double("medium.slab_phase_thickness", m.slab_phase_thickness);
  m.a_max = config.get_double("medium.a_max", m.a_max);
  m.background = config.get_double("medium.background", m.background);
  m.scale = config.get_double("medium.scale", m.scale);
  m.validate();
  return m;
}

std::vector<double> grid_from_config(const Config& config) {
  const double lo = config.get_double("grid.min", -1.5);
  const double hi = config.get_double("grid.max", 1.5);
  const long points = config.get_long("grid.points", 301);
  if (!(hi > lo) || points < 2) {
    fail_validation("grid needs max > min and at least 2 points");
  }
  return uniform_grid(lo, hi, static_cast<std::size_t>(points));
}

double gamma_f_from_config(const Config& config) {
  const double g = config.get_double("detector.gamma_f", 0.0107);
  if (!(g > 0.0)) fail_validation("detector.gamma_f must be positive");
  return g;
}

FitConfig fit_config_from_config(const Config& config) {
  FitConfig fc;
  ModelPoint& start = fc.initial;
  start.model.delta = config.get_double("model.delta");
  start.model.rabi = config.get_double("model.rabi");
  start.model.kerr = config.get_double("model.kerr");
  start.model.gamma = config.get_double("model.gamma");
  if (config.has("model.laser_power")) {
    start.model.laser_power = config.get_double("model.laser_power");
  }
  start.medium = MediumParams{};
  start.medium.f = config.get_double("medium.f", start.medium.f);
  start.medium.mode = absorption_mode_from_string(
      config.get_string("medium.mode", std::string(to_string(start.medium.mode))));
  start.medium.slab_phase_thickness =
      config.get_double("medium.slab_phase_thickness", start.medium.slab_phase_thickness);
  start.medium.a_max = config.get_double("medium.a_max", start.medium.a_max);
  start.medium.background = config.get_double("medium.background", 0.0);
  start.medium.scale = config.get_double("medium.scale", 1.0);
  start.gamma_f = gamma_f_from_config(config);
  start.sync();

  const std::string free = config.get_string("fit.free", "all");
  if (free == "all") {
    fc.free_params.assign(kAllFitParams.begin(), kAllFitParams.end());
  } else if (free != "none") {
    for (const auto& name : split_list(free)) fc.free_params.push_back(fit_param_from_string(name));
  }
  for (FitParam p : kAllFitParams) {
    const std::string key = "fit.bound_" + std::string(to_string(p));
    if (!config.has(key)) continue;
    const auto lohi = config.get_list(key);
    if (lohi.size() != 2) fail_validation(key + ": expected 'low, high'");
    fc.bounds[p] = Bounds{lohi[0], lohi[1]};
  }
  const std::string dim = config.get_string("fit.fock_dim", "auto");
  if (dim != "auto") fc.fock_dim = static_cast<int>(config.get_long("fit.fock_dim", 0));
  fc.optimizer = optimizer_from_string(
      config.get_string("fit.optimizer", std::string(to_string(fc.optimizer))));
  fc.max_evals = static_cast<int>(config.get_long("fit.max_evals", fc.max_evals));
  fc.tolerance = config.get_double("fit.tolerance", fc.tolerance);
  fc.use_weights = config.get_bool("fit.use_weights", fc.use_weights);
  fc.normalize = config.get_bool("fit.normalize", fc.normalize);
  if (config.has("fit.exclude")) {
    for (const auto& window : split_list(config.get_string("fit.exclude"))) {
      const auto colon = window.find(':');
      if (colon == std::string::npos) fail_validation("fit.exclude: expected lo:hi windows");
      fc.exclusions.emplace_back(to_double("fit.exclude", trim(window.substr(0, colon))),
                                 to_double("fit.exclude", trim(window.substr(colon + 1))));
    }
  }
  fc.validate();
  return fc;
}

std::uint64_t seed_from_config(const Config& config) {
  if (!config.has("run.seed")) {
    fail_validation("run.seed is required for randomized steps (no default seed)");
  }
  const long seed = config.get_long("run.seed", 0);
  if (seed < 0) fail_validation("run.seed must be nonnegative");
  return static_cast<std::uint64_t>(seed);
}

MultiModeParams multimode_from_config(const Config& config) {
  MultiModeParams p;
  p.n_modes = static_cast<int>(config.get_long("oracle.n_modes", 1));
  p.rabi_single = config.get_double("oracle.rabi_single");
  p.kerr_single = config.get_double("oracle.kerr_single");
  p.delta = config.get_double("oracle.delta");
  p.gamma = config.get_double("oracle.gamma");
  p.dim_per_mode = static_cast<int>(config.get_long("oracle.dim_per_mode", p.dim_per_mode));
  if (p.n_modes < 1) fail_validation("oracle.n_modes must be >= 1");
  const std::string phases = config.get_string("oracle.phases", "equal");
  if (phases == "equal") {
    p.phases.assign(static_cast<std::size_t>(p.n_modes), 0.0);
  } else if (phases == "antiphase") {
    p.phases.resize(static_cast<std::size_t>(p.n_modes));
    for (int n = 0; n < p.n_modes; ++n) p.phases[n] = (n % 2) * std::numbers::pi;
  } else if (phases == "random") {
    std::mt19937_64 rng(seed_from_config(config));
    std::uniform_real_distribution<double> uni(0.0, 2.0 * std::numbers::pi);
    p.phases.resize(static_cast<std::size_t>(p.n_modes));
    for (auto& phi : p.phases) phi = uni(rng);
  } else {
    p.phases = config.get_list("oracle.phases");
  }
  p.validate();
  return p;
}

SFThresholds thresholds_from_config(const Config& config) {
  SFThresholds t;
  t.margin = config.get_double("sf.margin", t.margin);
  t.threshold_sf = config.get_double("sf.threshold_sf", t.threshold_sf);
  if (!(t.margin > 0.0) || !(t.threshold_sf > 0.0)) {
    fail_validation("sf thresholds must be positive");
  }
  return t;
}

// ---------------------------------------------------------------- reports

std::string fit_report(const FitResult& result, const FitConfig& config,
                       std::string_view data_source) {
  pt::ptree tree;
  const auto put = [&tree](const std::string& key, const std::string& value) {
    tree.put(pt::ptree::path_type(key, '/'), value);
  };
  const auto num = [](double v) { return format_double(v); };
  const auto join = [](const auto& items, auto&& fmt) {
    std::string out;
    for (const auto& item : items) {
      if (!out.empty()) out += ", ";
      out += fmt(item);
    }
    return out;
  };
  const auto name = [](FitParam p) { return std::string(to_string(p)); };

  put("report/kind", "fit");
  put("report/data", std::string(data_source));
  put("report/objective",
      config.use_weights ? "least squares, data weight column when present (else 1)"
                         : "unweighted least squares");
  put("report/units",
      "delta rabi kerr gamma gamma_f in meV; laser_power in microwatt; f a.u.; "
      "scale and background in units of the data divided by data_scale");

  put("config/free", config.free_params.empty() ? "none" : join(config.free_params, name));
  put("config/optimizer", std::string(to_string(config.optimizer)));
  put("config/max_evals", std::to_string(config.max_evals));
  put("config/tolerance", num(config.tolerance));
  put("config/use_weights", config.use_weights ? "true" : "false");
  put("config/normalize", config.normalize ? "true" : "false");
  put("config/fock_dim", config.fock_dim ? std::to_string(*config.fock_dim) : "auto");
  put("config/medium_mode", std::string(to_string(config.initial.medium.mode)));
  for (FitParam p : kAllFitParams) {
    put("config/start_" + name(p), num(config.initial.get(p)));
    const Bounds b = config.bounds_for(p);
    put("config/bound_" + name(p), num(b.low) + ", " + num(b.high));
  }
  if (!config.exclusions.empty()) {
    put("config/exclude", join(config.exclusions, [&](const auto& w) {
          return num(w.first) + ":" + num(w.second);
        }));
  }

  for (FitParam p : kAllFitParams) put("result/" + name(p), num(result.params.get(p)));
  put("result/gamma_f", num(result.params.gamma_f));
  put("result/slab_phase_thickness", num(result.params.medium.slab_phase_thickness));
  put("result/a_max", num(result.params.medium.a_max));
  if (result.laser_power) put("result/laser_power", num(*result.laser_power));
  put("result/chi2", num(result.chi2));
  put("result/n_points", std::to_string(result.n_points));
  put("result/converged", result.converged ? "true" : "false");
  put("result/evaluations", std::to_string(result.evaluations));
  put("result/fock_dim", std::to_string(result.fock_dim));
  put("result/data_scale", num(result.data_scale));
  put("result/at_bound", result.at_bound.empty() ? "none" : join(result.at_bound, name));
  put("result/trace", join(result.trace, num));

  for (const auto& [p, sigma] : result.uncertainties) put("uncertainty/" + name(p), num(sigma));
  put("diagnostics/count", std::to_string(result.diagnostics.size()));
  for (std::size_t k = 0; k < result.diagnostics.size(); ++k) {
    put("diagnostics/line_" + std::to_string(k + 1), result.diagnostics[k]);
  }

  std::ostringstream out;
  pt::write_ini(out, tree);
  return out.str();
}

CollectiveModelParams read_fit_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open fit report " + path.string());
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail_validation(path.string() + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  const auto get = [&](const std::string& key) -> std::optional<double> {
    const auto v = tree.get_optional<std::string>("result." + key);
    if (!v) return std::nullopt;
    return to_double(path.string() + ": result." + key, trim(*v));
  };
  CollectiveModelParams p;
  const auto power = get("laser_power");
  if (!power) fail_validation(path.string() + ": fit report has no laser_power");
  p.laser_power = *power;
  for (const char* key : {"rabi", "kerr"}) {
    if (!get(key)) fail_validation(path.string() + ": fit report has no result." + key);
  }
  p.rabi = *get("rabi");
  p.kerr = *get("kerr");
  p.delta = get("delta").value_or(0.0);
  p.gamma = get("gamma").value_or(1.0);
  if (const auto d = get("fock_dim"); d && *d >= 2) p.fock_dim = static_cast<int>(*d);
  return p;
}

std::string sf_report(const std::vector<SFReport>& reports, SFClass verdict,
                      const SFThresholds& thresholds) {
  pt::ptree tree;
  const auto put = [&tree](const std::string& key, const std::string& value) {
    tree.put(pt::ptree::path_type(key, '/'), value);
  };
  put("report/kind", "sf-test");
  put("report/units", "laser power in microwatt; rabi and kerr in meV");
  put("report/margin", format_double(thresholds.margin));
  put("report/threshold_sf", format_double(thresholds.threshold_sf));
  put("report/pairs", std::to_string(reports.size()));
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const SFReport& r = reports[k];
    const std::string s = "pair_" + std::to_string(k + 1) + "/";
    put(s + "power_1", format_double(r.power_1));
    put(s + "power_2", format_double(r.power_2));
    put(s + "rabi_1", format_double(r.rabi_1));
    put(s + "rabi_2", format_double(r.rabi_2));
    put(s + "kerr_1", format_double(r.kerr_1));
    put(s + "kerr_2", format_double(r.kerr_2));
    put(s + "lhs", format_double(r.lhs));
    put(s + "kerr_ratio", format_double(r.kerr_ratio));
    put(s + "agreement", format_double(r.agreement));
    put(s + "classification", std::string(to_string(r.classification)));
  }
  put("verdict/overall", std::string(to_string(verdict)));
  std::ostringstream out;
  pt::write_ini(out, tree);
  return out.str();
}

std::string table_text(const std::vector<std::string>& header,
                       const std::vector<std::string>& columns,
                       const std::vector<std::vector<double>>& data, char separator) {
  std::string out;
  for (const auto& line : header) out += "# " + line + "\n";
  out += "#";
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out += (c == 0 ? " " : std::string(1, separator)) + columns[c];
  }
  out += "\n";
  const std::size_t rows = data.empty() ? 0 : data.front().size();
  for (const auto& col : data) {
    if (col.size() != rows) fail_validation("table columns differ in length");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < data.size(); ++c) {
      if (c) out += separator;
      out += format_double(data[c][r]);
    }
    out += "\n";
  }
  return out;
}

}  // namespace kerrsf
