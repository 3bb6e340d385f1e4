#ifndef LBILL_TOOLS_PIPELINE_HPP
#define LBILL_TOOLS_PIPELINE_HPP

// Stage orchestration over (lambda, window) pairs with content-addressed output.

#include "lbill/classical.hpp"
#include "lbill/quantum.hpp"
#include "lbill/spectra.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lbill::pipeline {

namespace fs = std::filesystem;

struct KWindow {
  double k_lo = 0.0;
  double k_hi = 0.0;
  double center() const { return 0.5 * (k_lo + k_hi); }
};

enum class ThresholdMode { fixed, classical };

struct RunConfig {
  std::vector<double> lambdas;
  std::vector<KWindow> windows;
  GridDims grid{400, 400};
  std::size_t transport_ensemble = 100000;
  std::vector<double> fractions{0.5, 0.7, 0.8, 0.9};
  int transport_collisions = 20000;
  std::int64_t chaotic_collisions = 100'000'000;
  double m_threshold = 0.5;
  ThresholdMode threshold_mode = ThresholdMode::fixed;
  double a0 = 0.7;
  UpperLimit a0_mode = UpperLimit::fixed;
  std::optional<std::uint64_t> seed;
  fs::path output_dir;
  std::vector<std::string> stages;  // empty = all, in pipeline order
  int threads = 1;
  SolverMethod solver = SolverMethod::scaling;
  double samples_per_wavelength = 6.0;
  std::size_t average_group = 100;
  int geometry_points = 1000;
  int histogram_bins = 30;
};

/// Stage names in execution order.
const std::vector<std::string>& stage_names();

/// Upstream stages whose artifacts a stage reads.
const std::vector<std::string>& stage_inputs(const std::string& stage);

/// `key = value` lines, `#` comments, lists comma separated, windows as lo:hi.
/// Unknown keys and malformed values raise ConfigError.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const fs::path& path);

/// Checks ranges and required fields after command-line overrides.
void validate(const RunConfig& config);

/// Canonical text of every field that affects numerical output. Thread count,
/// output directory and stage selection are excluded.
std::string canonical_config(const RunConfig& config);
std::string config_hash(const RunConfig& config);

/// <output_dir>/<config hash>
fs::path run_directory(const RunConfig& config);

struct StageRecord {
  std::vector<std::string> artifacts;  // relative to the run directory
  double seconds = 0.0;
};

struct RunManifest {
  std::string config_hash;
  std::string version;
  std::map<std::string, StageRecord> stages;
};

/// Runs one stage. Upstream artifacts must already be on disk (MissingArtifact).
/// Module errors are rethrown as StageFailed.
StageRecord run_stage(const RunConfig& config, const std::string& stage);

/// Runs the selected stages in order, or only `only` when given, and writes
/// manifest.json into the run directory.
RunManifest run(const RunConfig& config, const std::optional<std::string>& only = std::nullopt);

/// Transport times N_T for one lambda, keyed by fraction.
std::map<double, int> read_transport_row(const fs::path& run_dir, double lambda);

std::string lambda_tag(double lambda);

}  // namespace lbill::pipeline

#endif  // LBILL_TOOLS_PIPELINE_HPP
