#pragma once

// Experiment configuration: a JSON document, validated in full before any
// run. Every problem is reported with its path, not just the first one.
// The format is documented in docs/formats.md.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bellsim/angle.hpp"
#include "bellsim/errors.hpp"
#include "bellsim/harness.hpp"
#include "bellsim/models.hpp"
#include "bellsim/spacetime.hpp"

namespace bellsim {

enum class ModelKind : std::uint8_t { singlet, pr_box, lhv, custom };
std::string_view to_string(ModelKind k);

struct ConfigIssue {
  std::string path;
  std::string reason;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

struct ExperimentConfig {
  ModelKind model = ModelKind::singlet;
  /// Singlet grid. The defaults give S = +2 sqrt(2) for the canonical CHSH pairs.
  std::vector<Angle> alice_angles{Angle(0, 1), Angle(1, 2)};
  std::vector<Angle> bob_angles{Angle(-3, 4), Angle(3, 4)};
  std::optional<LhvModel> lhv;
  std::string behavior_file;
  std::optional<Behavior> custom;
  ChshSettings chsh;
  std::uint64_t trials_per_pair = 100000;
  std::uint64_t seed = 1;
  ScheduleConfig schedule;
  QConfig q;
  bool preset_settings = false;
  unsigned threads = 1;
  /// Points on the analytic correlator-vs-angle curve; 0 disables it.
  std::size_t curve_points = 25;

  Behavior behavior() const;
};

/// Parses and validates. Relative behavior-file paths resolve against
/// `base_dir`; a `.csv` behavior file is read as a behavior table, anything
/// else as a JSON behavior document. Throws ConfigError listing every invalid field.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});

/// Custom behavior document: {"alice_settings": [...], "bob_settings": [...],
/// "table": [[p++, p+-, p-+, p--], ...]} with rows ordered x-major.
Behavior parse_behavior(std::string_view text);

/// Behavior table as CSV with header `x,y,a,b,p`: one row per setting pair
/// and outcome pair, settings by label, outcomes as +1/-1. Setting order is
/// order of first appearance. Round-trips with format_behavior_table.
Behavior parse_behavior_table(std::string_view text);
std::string format_behavior_table(const Behavior& b);

}  // namespace bellsim
