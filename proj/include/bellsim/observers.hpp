#pragma once

// Per-observer belief ledgers. Each observer starts from the shared
// preparation, conditions factually only on what reaches its worldline, and
// may pose counterfactual inquiries about anything else.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bellsim/models.hpp"
#include "bellsim/prob_kernel.hpp"
#include "bellsim/spacetime.hpp"

namespace bellsim {

enum class Stage : std::uint8_t { t0 = 0, t_theta = 1, t_pm = 2, t_c = 3 };

/// "t0", "tθ", "t±", "tc": the stage conditioner's name in rendered ledgers.
std::string_view label(Stage s);
Variable stage_variable(Stage s);
Variable preparation_variable();

/// The four ledger variables for a behavior's grid, in canonical order
/// ±a, θa, ±b, θb.
struct LedgerVariables {
  Variable outcome_a;
  Variable setting_a;
  Variable outcome_b;
  Variable setting_b;

  explicit LedgerVariables(const Behavior& b);
  const Variable& outcome(ObserverId o) const { return o == ObserverId::alice ? outcome_a : outcome_b; }
  const Variable& setting(ObserverId o) const { return o == ObserverId::alice ? setting_a : setting_b; }
  std::vector<Variable> canonical() const { return {outcome_a, setting_a, outcome_b, setting_b}; }
  static std::vector<std::string> canonical_names();
};

/// Measurement uncertainty over one variable. A Kronecker delta means the
/// value is known exactly.
struct QUncertainty {
  Variable variable;
  std::vector<double> distribution;

  static QUncertainty delta(Variable v, std::size_t at);
  static QUncertainty uniform(Variable v);
  /// Weights exp(-(pos_i - pos_center)^2 / (2 width^2)) over the domain;
  /// width 0 gives the delta.
  static QUncertainty peaked(Variable v, std::span<const double> positions, std::size_t center, double width);

  std::optional<std::size_t> delta_value() const;
  bool is_delta() const { return delta_value().has_value(); }
  TaggedJoint as_joint(std::string observer) const;
};

/// p(x, y) over the behavior's setting grid, indexed [x * bob_count + y].
struct SettingPrior {
  std::size_t alice_count = 0;
  std::size_t bob_count = 0;
  std::vector<double> p;

  static SettingPrior uniform(std::size_t alice_count, std::size_t bob_count);
  void validate() const;
  friend bool operator==(const SettingPrior&, const SettingPrior&) = default;
};

class ObserverState {
 public:
  ObserverId id() const { return id_; }
  const Worldline& worldline() const { return worldline_; }
  std::span<const SpacetimeEvent> received() const { return received_; }
  const TaggedJoint& ledger() const { return ledger_; }
  Stage stage() const { return stage_; }
  /// Reception time of the latest received event.
  double clock() const { return clock_; }
  /// Known local measurements and received reports, with their uncertainty.
  std::span<const QUncertainty> measurements() const { return measurements_; }
  const QUncertainty* measurement(std::string_view variable) const;
  /// Known only through a non-delta Q.
  bool unresolved(std::string_view variable) const;
  /// Variables fixed by prior agreement before t0 (preset-settings mode).
  std::span<const std::string> preset() const { return preset_; }

 private:
  friend struct ObserverAccess;
  ObserverId id_ = ObserverId::alice;
  Worldline worldline_;
  std::vector<SpacetimeEvent> received_;
  TaggedJoint ledger_ = TaggedJoint::uniform("", {});
  Stage stage_ = Stage::t0;
  double clock_ = 0.0;
  std::vector<QUncertainty> measurements_;
  std::vector<std::string> preset_;
};

using ObserverHistory = std::vector<ObserverState>;

struct BeliefPair {
  ObserverState alice;
  ObserverState bob;
};

/// Both observers start from P(±a,θa,±b,θb‖ψ0,t0) = p(a,b|x,y) p(x,y).
/// Throws InvalidArgument when the two priors differ: the ledgers must agree at t0.
BeliefPair init_beliefs(const Behavior& model, const Schedule& schedule, const SettingPrior& alice_prior,
                        const SettingPrior& bob_prior);
BeliefPair init_beliefs(const Behavior& model, const Schedule& schedule);

/// Settings agreed ahead of time: both ledgers start as
/// P(±a,±b‖θa,θb,ψ0,t0) with the settings factual.
BeliefPair init_beliefs_preset(const Behavior& model, const Schedule& schedule, std::size_t x, std::size_t y);

/// Absorbs one event that reached the observer's worldline. A delta `q`
/// conditions factually; otherwise the ledger becomes p(rest|var) q(var).
/// Throws RealismViolation when the reported value has zero probability.
ObserverState receive(const ObserverState& s, const SpacetimeEvent& e, const QUncertainty& q);
ObserverState receive(ObserverState&& s, const SpacetimeEvent& e, const QUncertainty& q);

/// Conditions on `assignments` with counterfactual tags and marginalizes
/// everything but `targets`. Assigned variables must still be free.
TaggedJoint inquire(const ObserverState& s, const std::vector<std::string>& targets,
                    const std::vector<std::pair<std::string, std::size_t>>& assignments);

/// Appends `s`, or replaces the last entry when it is at the same stage.
void record(ObserverHistory& history, const ObserverState& s);

/// Factual conditioners are ψ0, the stage label, preset settings, or
/// payloads of events already received. Checkable on any trace.
bool information_local(const ObserverState& s);

struct StageRow {
  Stage stage = Stage::t0;
  std::string alice;
  std::string bob;
  bool equal = false;
};

struct StageTable {
  std::vector<StageRow> rows;
  /// e.g. "y,n,n,y".
  std::string pattern() const;
};

/// Throws InvalidArgument ("incomplete run") when either history is empty or
/// the two do not visit the same stages.
StageTable stage_table(const ObserverHistory& alice, const ObserverHistory& bob);

struct DataPoint {
  std::size_t x = 0;
  std::size_t y = 0;
  Outcome a = Outcome::plus;
  Outcome b = Outcome::plus;
  friend bool operator==(const DataPoint&, const DataPoint&) = default;
};

struct PoolResult {
  ObserverState alice;
  ObserverState bob;
  TaggedJoint pooled;
  /// argmax of the pooled ledger.
  DataPoint data;
};

/// Shares everything both observers measured. Each ledger absorbs what it
/// lacks; a report with zero probability under the other's ledger, or two
/// disagreeing reports of the same variable, raise RealismViolation. Both
/// end at t_c holding Q(θa)Q(±a)Q(θb)Q(±b). Two states with no measurements
/// at all are returned unchanged.
PoolResult pool(const ObserverState& alice, const ObserverState& bob);

/// Likelihood of `target` under the ledger held at `past`, conditioned on the
/// data known exactly at t_c. Renders as P_A(±a|tθ|θa,±b,θb,tc).
TaggedJoint retrodict(const ObserverHistory& history, std::string_view target, Stage past);

}  // namespace bellsim
