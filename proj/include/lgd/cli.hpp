#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "lgd/data.hpp"
#include "lgd/models.hpp"
#include "lgd/optimizer.hpp"

namespace lgd::cli {

enum ExitCode : int { kOk = 0, kAssertionFailed = 1, kUsageError = 2 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every recognised key with its default; docs/config.md describes them.
nlohmann::json default_config();

/// Recursively overlays `overlay` onto `base`. Keys missing from `base` and
/// type changes (other than into a null default) raise UsageError.
void merge_config(nlohmann::json& base, const nlohmann::json& overlay, const std::string& where = "");

/// Sets a dotted key ("hash.K") from command-line text. The text is read as
/// JSON when it parses, otherwise as a string.
void apply_override(nlohmann::json& config, const std::string& dotted, const std::string& text);

struct DataConfig {
  std::optional<std::string> path;
  int label_column = -1;
  bool normalize = true;
  PreprocessConfig split;
  std::string generator = "power_law_lsq";
  std::size_t n = 1000;
  std::size_t d = 32;
  double exponent = 1.5;
  double residual_scale = 5.0;
  double theta_norm = 1.0;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

struct DiagnoseConfig {
  std::vector<std::string> checks;
  std::uint64_t draws = 100000;
  double warm_fraction = 0.25;
  std::uint64_t probe_samples = 200;
  double unbiased_tolerance = 0.05;
  double trace_tolerance = 0.03;
  std::uint64_t variance_trials = 10000;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out;
  DataConfig data;
  ModelSpec model;  // d is filled in once the data is loaded
  std::vector<SamplerKind> samplers;
  RunOptions run;
  bool sweep = false;
  std::optional<double> threshold;
  DiagnoseConfig diagnose;
  std::uint64_t sample_queries = 1000;
  double sample_theta_norm = 1.0;
};

/// Validates a merged config. Throws UsageError with the offending key.
RunConfig parse_run_config(const nlohmann::json& config);

struct LoadedData {
  Dataset train;
  Dataset test;
  ModelSpec model;
};

LoadedData load_data(const RunConfig& cfg);

int cmd_bench(const RunConfig& cfg, std::ostream& out);
int cmd_diagnose(const RunConfig& cfg, std::ostream& out);
int cmd_sample_stats(const RunConfig& cfg, std::ostream& out);

/// Full command line: `lgd <bench|diagnose|sample-stats> [--config F]
/// [--seed S] [--out DIR] [--a.b=value ...]`.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lgd::cli
