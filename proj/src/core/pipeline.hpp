#pragma once

#include "core/coefficients.hpp"
#include "core/error.hpp"
#include "core/pde.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace fbsde {

inline constexpr const char* kOutputRootEnv = "FBSDE_OUTPUT_ROOT";

inline const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names{"girsanov", "residual", "cauchy", "sobolev",
                                              "malliavin"};
  return names;
}

struct RunConfig {
  std::string problem_name;        // catalog name, or the custom problem's name
  std::string custom_yaml;         // non-empty for custom problems
  std::shared_ptr<const Problem> problem;
  std::vector<int> levels{4, 8};
  int quad_order = 16;
  double cutoff_halfwidth = 0.0;
  GridSpec grid;
  std::size_t paths = 10000;
  std::size_t steps = 200;
  std::uint64_t seed = 1;
  std::vector<double> x0;  // defaults to the origin
  double s = 0.0;
  std::vector<std::string> checks{"residual"};
  std::filesystem::path output = "fbsde-out";
  std::size_t jobs = 1;

  double girsanov_t = -1.0;            // negative: T / 2
  std::size_t sobolev_paths = 500;
  std::size_t sobolev_points = 21;
  double sobolev_halfwidth = 2.0;
  double sobolev_p = 2.0;
  std::size_t malliavin_paths = 2000;
  std::size_t malliavin_s_points = 8;
};

// Parses the YAML run config; throws Error(Config) naming the offending key.
RunConfig parse_run_config(std::string_view yaml_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Resolves the problem and checks levels, grid, simulation settings and
// checks. Throws Error(Config) or Error(UnknownProblem).
void finalize_run_config(RunConfig& cfg);

// Expands "all" and validates check names.
std::vector<std::string> parse_checks(std::string_view list);
std::vector<int> parse_levels(std::string_view list);
std::vector<double> parse_numbers(std::string_view list);

// Canonical JSON text of the config; its FNV-1a hash tags every report.
std::string canonical_config(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

// cfg.output, placed under $FBSDE_OUTPUT_ROOT when that is set and the
// output path is relative.
std::filesystem::path resolve_output_dir(const RunConfig& cfg);

struct PipelineResult {
  int exit_code = 0;  // 0 ok, 1 hard invariant failure, 2 config, 3 I/O
  std::filesystem::path output_dir;
  std::vector<std::string> files;     // file names written, in order
  std::vector<std::string> failures;  // hard invariant failures
  std::vector<std::string> warnings;
  std::string text;  // human-readable summary
  std::string json;  // per-level reports plus the cross-level report
};

// Runs mollify -> solve -> a-priori checks -> simulate -> reconstruct ->
// requested checks for every level, then the cross-level report. Errors in
// the config or the file system are reported through exit_code, never
// thrown. Progress lines go to `log` when given.
PipelineResult run_pipeline(const RunConfig& cfg, std::ostream* log = nullptr);

// Partial runs for the CLI: `solve` writes field_n.csv, `simulate` adds
// ensemble_n.csv, `verify` runs the requested checks without writing files.
PipelineResult run_solve(const RunConfig& cfg, std::ostream* log = nullptr);
PipelineResult run_simulate(const RunConfig& cfg, std::ostream* log = nullptr);
PipelineResult run_verify(const RunConfig& cfg, std::ostream* log = nullptr);

int exit_code_for(ErrorCode code);

}  // namespace fbsde
