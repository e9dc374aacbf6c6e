#pragma once

// End-to-end run: config in, report files out.
//
//   dataset.csv         one row per trial
//   summary.json        estimates, no-signaling, factorizability, classification, stage table
//   trace.json          event log of the first trial with per-stage ledgers
//   model_behavior.csv  the model's p(a,b|x,y), one row per (x,y,a,b)
//   correlators.dat     analytic and empirical correlators, plain columns
//
// Formats are described in docs/formats.md.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>

#include "bellsim/config.hpp"

namespace bellsim {

enum class ExitCode : int { ok = 0, config_error = 1, runtime_error = 2, io_error = 3 };

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> trials_per_pair;
  /// Log stream detail: 0 errors only, 1 progress and the S estimate,
  /// 2 adds the stage table and classifications.
  int verbosity = 1;
};

/// Writes the output files into `out_dir`, creating it if needed.
/// Module errors are reported on `log` and mapped to an exit code.
ExitCode run(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::ostream& log,
             int verbosity = 1);

/// Reads and validates the config, applies the overrides, then runs.
ExitCode run_from_file(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                       const RunOptions& options, std::ostream& log);

/// Validation only: 0 when the config is valid, 1 otherwise, 3 on I/O failure.
ExitCode validate_file(const std::filesystem::path& config_path, std::ostream& log);

}  // namespace bellsim
