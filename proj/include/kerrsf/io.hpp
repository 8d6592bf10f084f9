#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "kerrsf/collective_sf.hpp"
#include "kerrsf/fit_engine.hpp"

namespace kerrsf {

/// Environment variable that, when set, replaces the directory part of every
/// relative output path.
inline constexpr const char* kOutputDirEnv = "KERRSF_OUTPUT_DIR";

/// Writes to a temporary sibling and renames it over the target.
void atomic_write(const std::filesystem::path& path, std::string_view content);

/// Relative paths are resolved against $KERRSF_OUTPUT_DIR when it is set.
std::filesystem::path resolve_output(const std::filesystem::path& path);

/// Shortest text that parses back to the same double.
std::string format_double(double value);

/// Sectioned key=value configuration ("[model]" / "delta = 0.1").
/// Keys are addressed as "section.key".
class Config {
 public:
  Config() = default;
  static Config load(const std::filesystem::path& path);
  static Config parse(std::string_view text, std::string_view source = "<string>");

  /// "section.key=value"; later overrides win.
  void apply_override(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key) const;

  std::string dump() const;
  const boost::property_tree::ptree& tree() const { return tree_; }

 private:
  boost::property_tree::ptree tree_;
};

/// [model] delta, rabi, kerr, gamma, fock_dim (integer or "auto"), laser_power.
/// fock_dim=auto runs converge_truncation at 1e-6.
CollectiveModelParams model_from_config(const Config& config);
/// [medium] f, mode, slab_phase_thickness, a_max, background, scale; the
/// resonance and width follow [model] delta and gamma.
MediumParams medium_from_config(const Config& config, const CollectiveModelParams& model);
/// [grid] min, max, points.
std::vector<double> grid_from_config(const Config& config);
/// [detector] gamma_f.
double gamma_f_from_config(const Config& config);
/// [fit] section plus [model]/[medium] start values.
FitConfig fit_config_from_config(const Config& config);
/// [oracle] n_modes, rabi_single, phases (list, "equal", "antiphase" or
/// "random"; random requires [run] seed), kerr_single, delta, gamma,
/// dim_per_mode.
MultiModeParams multimode_from_config(const Config& config);
SFThresholds thresholds_from_config(const Config& config);
/// Required [run] seed; a validation error when absent.
std::uint64_t seed_from_config(const Config& config);

std::string fit_report(const FitResult& result, const FitConfig& config,
                       std::string_view data_source);
/// Reads laser_power, rabi and kerr (and the rest of the model) back from a
/// fit report. Validation error when laser_power is missing.
CollectiveModelParams read_fit_report(const std::filesystem::path& path);

std::string sf_report(const std::vector<SFReport>& reports, SFClass verdict,
                      const SFThresholds& thresholds);

/// "# ..." header lines followed by comma- or tab-separated rows.
std::string table_text(const std::vector<std::string>& header,
                       const std::vector<std::string>& columns,
                       const std::vector<std::vector<double>>& data, char separator = ',');

}  // namespace kerrsf
