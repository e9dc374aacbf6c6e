#pragma once

// Trial sampling and estimation. A trial draws settings at t_θ, samples the
// joint outcome at t_±, drives both observers through every reception, and
// pools their reports at t_c. Experiments repeat trials per setting pair.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bellsim/models.hpp"
#include "bellsim/observers.hpp"
#include "bellsim/spacetime.hpp"

namespace bellsim {

/// Counter-based generator: draw k of substream s under seed m is a pure
/// function of (m, s, k), so trials can run in any order or thread.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  std::size_t below(std::size_t n);
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

/// Inverse-CDF draw over a slice in cell order (+,+), (+,-), (-,+), (-,-).
std::size_t sample_cell(std::span<const double, 4> slice, double u);

struct SettingsPolicy {
  enum class Draw : std::uint8_t { uniform, fixed };
  Draw draw = Draw::uniform;
  std::size_t x = 0;
  std::size_t y = 0;
  /// Settings agreed before t0, so both ledgers hold them factually.
  bool preset = false;

  static SettingsPolicy free_choice() { return {}; }
  static SettingsPolicy fixed(std::size_t x, std::size_t y) { return {Draw::fixed, x, y, false}; }
};

struct QConfig {
  /// Width (radians for angle grids, index units otherwise) of the peaked
  /// Q over each observer's own setting; 0 means exact.
  double setting_width = 0.0;
  /// Alice hears the click but never learns which setting she chose:
  /// her Q over θa is uniform over her grid.
  bool unresolved_local_setting = false;
};

/// Everything a trial needs that does not change between trials.
class TrialSetup {
 public:
  TrialSetup(Behavior model, Schedule schedule, QConfig q = {});

  const Behavior& model() const { return model_; }
  const Schedule& schedule() const { return schedule_; }
  const QConfig& q() const { return q_; }
  const LedgerVariables& variables() const { return vars_; }
  const BeliefPair& initial() const { return initial_; }
  const BeliefPair& preset_initial(std::size_t x, std::size_t y) const;

  /// Q an observer assigns to its own setting after choosing index `value`.
  QUncertainty setting_q(ObserverId o, std::size_t value) const;

 private:
  Behavior model_;
  Schedule schedule_;
  QConfig q_;
  LedgerVariables vars_;
  BeliefPair initial_;
  std::vector<BeliefPair> preset_;
  std::vector<double> alice_positions_;
  std::vector<double> bob_positions_;
};

struct ReceptionTimes {
  double own_setting = 0.0;
  double own_detection = 0.0;
  double remote_setting = 0.0;
  double remote_outcome = 0.0;

  friend bool operator==(const ReceptionTimes&, const ReceptionTimes&) = default;
};

struct TrialRecord {
  std::uint64_t trial = 0;
  std::size_t x = 0;
  std::size_t y = 0;
  Outcome a = Outcome::plus;
  Outcome b = Outcome::plus;
  ReceptionTimes alice;
  ReceptionTimes bob;
  std::uint64_t substream = 0;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

struct TrialResult {
  TrialRecord record;
  /// One snapshot per stage; the t_c entry holds the pooled ledger.
  ObserverHistory alice;
  ObserverHistory bob;
  DataPoint pooled;
};

/// Deterministic in (setup, policy, seed, trial). RealismViolation from the
/// observers propagates.
TrialResult run_trial(const TrialSetup& setup, const SettingsPolicy& policy, std::uint64_t seed,
                      std::uint64_t trial);

/// Same draws as run_trial without the observers; yields the same record.
TrialRecord sample_trial(const TrialSetup& setup, const SettingsPolicy& policy, std::uint64_t seed,
                         std::uint64_t trial);

struct Dataset {
  std::vector<Setting> alice_settings;
  std::vector<Setting> bob_settings;
  /// n(a,b|x,y), indexed [x * bob_count + y][cell].
  std::vector<std::array<std::uint64_t, 4>> counts;
  std::vector<TrialRecord> records;

  static Dataset empty_for(const Behavior& b);
  void add(const TrialRecord& r, bool keep_record);
  std::uint64_t trials(std::size_t x, std::size_t y) const;
  std::uint64_t total() const;
};

/// Counts add; records concatenate.
Dataset merge(const Dataset& a, const Dataset& b);

struct ExperimentOptions {
  std::uint64_t trials_per_pair = 1;
  std::uint64_t seed = 0;
  /// Setting pairs to run; empty means every pair of the grid.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  bool preset = false;
  unsigned threads = 1;
  bool keep_records = true;
  /// Drive the observers (and the realism check) on every trial.
  bool track_beliefs = true;
};

struct ExperimentResult {
  Dataset dataset;
  /// Full trace of trial 0 when beliefs are tracked.
  std::optional<TrialResult> first_trial;
};

/// Trial i of pair block k has index k * trials_per_pair + i. The dataset
/// does not depend on the thread count.
ExperimentResult run_experiment(const TrialSetup& setup, const ExperimentOptions& options);

struct EstimatedBehavior {
  Behavior behavior;
  /// sqrt(p(1-p)/N) per cell, same layout as the behavior table.
  std::vector<double> standard_error;
};

/// Throws MissingData naming the first setting pair without trials.
EstimatedBehavior estimate_behavior(const Dataset& d);

struct ChshEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Empirical correlators with standard error sqrt((1 - E^2)/N), combined in
/// quadrature. Throws MissingData when a CHSH pair has no trials.
ChshEstimate estimate_chsh(const Dataset& d, const ChshSettings& s);

enum class Classification : std::uint8_t {
  factual_local,
  counterfactual_local,
  counterfactual_nonlocal,
  not_applicable,
};
std::string_view to_string(Classification c);

struct ChshEvidence {
  double s = 0.0;
  double standard_error = 0.0;
  /// Experiments behind `s`; one experiment has one factual setting pair.
  std::uint64_t experiments = 1;
  /// The evaluation posits settings other than the factual ones.
  bool posit_alternates = false;
};

struct ViolationReport {
  ObserverId observer = ObserverId::alice;
  Stage stage = Stage::t0;
  double s = 0.0;
  double standard_error = 0.0;
  bool exceeds_bound = false;
  Classification classification = Classification::not_applicable;
  /// Setting conditioners carrying a counterfactual tag in the evaluation.
  std::vector<std::string> counterfactual;
  /// The subset that belongs to the distant wing.
  std::vector<std::string> nonlocal;
  /// Rendered CHSH inquiry, e.g. P_A(±a,±b|θb|θa,ψ0,tθ).
  std::string inquiry;
};

/// Classifies a CHSH statement made by the trace's observer at `stage`.
/// Throws InvalidArgument when the stage is not in the trace.
ViolationReport classify_violation(const ObserverHistory& trace, Stage stage, const ChshEvidence& evidence);

}  // namespace bellsim
