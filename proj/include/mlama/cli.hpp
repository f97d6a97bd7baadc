#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlama/sim.hpp"

namespace mlama::cli {

enum class Mode { Se, Sim, Mrt, FixedPoint, Compare };

std::string_view mode_label(Mode m);

/// Invalid or inconsistent configuration (exit status 1).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fully resolved experiment description.
struct ExperimentConfig {
  Mode mode = Mode::Sim;
  std::optional<int> mt;
  std::optional<int> mr;
  std::optional<double> beta_value;  ///< explicit beta (SE-only modes)
  std::string constellation = "BPSK";
  bool real_mode = true;
  std::vector<DetectorKind> detectors;
  TuningMode tuning = TuningMode::Optimal;
  int t_max = 10;
  std::vector<double> snr_db;
  int trials = 1000;
  std::vector<double> n0;
  std::uint64_t seed = 1;
  std::string output;
  int threads = 0;
  int box_max_iters = 5000;
  double box_tol = 1e-12;

  /// MT / MR, or the explicit beta.
  double beta() const;
  Prior prior() const;
};

/// Parses a YAML document. `overrides` is a second YAML mapping (built from
/// command-line flags) whose keys replace those of the document.
ExperimentConfig parse_config(const std::string& yaml_text, const std::string& overrides = "");

/// Constellation by label: BPSK, 2PAM, 4PAM, 8PAM (real) or QPSK, 16QAM,
/// 64QAM, 256QAM (complex).
Prior constellation_by_label(const std::string& label);

struct RunOutput {
  std::string csv;
  std::string json;                   ///< sidecar metadata
  std::vector<std::string> summary;   ///< one line per detector / grid point
};

RunOutput run(const ExperimentConfig& config);

/// Echo of the resolved config using the file schema.
std::string config_to_json(const ExperimentConfig& config);

/// Version string recorded in sidecars.
std::string version();

/// Full command-line entry point; returns the process exit status
/// (0 success, 1 usage error, 2 numerical or I/O failure).
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mlama::cli
