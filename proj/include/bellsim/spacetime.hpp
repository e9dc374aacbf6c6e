#pragma once

// 1+1D lab-frame kinematics for two stationary observers: interval
// classification, signal reception, and the four-stage experiment schedule.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bellsim {

enum class ObserverId : std::uint8_t { alice = 0, bob = 1 };

inline ObserverId other(ObserverId o) { return o == ObserverId::alice ? ObserverId::bob : ObserverId::alice; }
std::string_view short_name(ObserverId o);  // "A" / "B"

enum class PayloadKind : std::uint8_t { preparation, setting_choice, detection, message };
std::string_view to_string(PayloadKind k);

struct Payload {
  PayloadKind kind = PayloadKind::preparation;
  /// Owner of a setting/detection, sender of a message.
  ObserverId observer = ObserverId::alice;
  /// Ledger variable the payload reports ("θa", "±b", ...); "ψ0" for preparation.
  std::string variable;
  /// Domain index of the reported value, once known.
  std::optional<std::size_t> value;
  /// Messages only.
  std::optional<ObserverId> recipient;
};

struct SpacetimeEvent {
  /// Global creation index; the tie-break for simultaneous receptions.
  std::size_t index = 0;
  double t = 0.0;
  double x = 0.0;
  Payload payload;
  /// Signal speed carrying this event's information, in (0, c].
  double emission_speed = 1.0;
};

struct Worldline {
  ObserverId observer = ObserverId::alice;
  double x = 0.0;
};

enum class Interval : std::uint8_t { timelike, lightlike, spacelike };
std::string_view to_string(Interval i);

/// Sign of c^2 dt^2 - dx^2; lightlike when it is within 1e-12 of zero
/// relative to c^2 dt^2 + dx^2.
Interval interval(const SpacetimeEvent& e1, const SpacetimeEvent& e2, double c = 1.0);

/// Time at which `w` learns of `e`: immediately for events on its own
/// worldline, otherwise after |x_e - x_w| / emission_speed.
double reception_time(const SpacetimeEvent& e, const Worldline& w);

/// Events sorted by reception time at `w`; ties go to the lower event index.
std::vector<SpacetimeEvent> reception_order(const Worldline& w, std::span<const SpacetimeEvent> events);

struct StageTimes {
  double t0 = 0.0;
  double t_theta = 0.1;
  double t_pm = 0.2;
  double t_c = 0.3;
};

struct ScheduleConfig {
  double alice_x = -1.0;
  double bob_x = 1.0;
  StageTimes alice;
  StageTimes bob;
  double c = 1.0;
  /// Speed of the classical messages exchanged at t_c.
  double signal_speed = 1.0;
};

/// Validated event list for one experiment. Event values are left empty;
/// trials fill them in.
class Schedule {
 public:
  const ScheduleConfig& config() const { return config_; }
  const Worldline& worldline(ObserverId o) const { return worldlines_[static_cast<std::size_t>(o)]; }
  std::span<const SpacetimeEvent> events() const { return events_; }

  const SpacetimeEvent& preparation() const;
  const SpacetimeEvent& setting_choice(ObserverId o) const;
  const SpacetimeEvent& detection(ObserverId o) const;
  /// Messages sent by `sender`: its setting, then its outcome.
  std::vector<const SpacetimeEvent*> messages_from(ObserverId sender) const;
  /// Events that reach `o`: its own setting and detection, and the messages addressed to it.
  std::vector<SpacetimeEvent> inbound(ObserverId o) const;

 private:
  friend Schedule build_schedule(const ScheduleConfig& config);
  ScheduleConfig config_;
  Worldline worldlines_[2];
  std::vector<SpacetimeEvent> events_;
};

/// Ledger variable names per observer.
std::string_view setting_variable(ObserverId o);  // "θa" / "θb"
std::string_view outcome_variable(ObserverId o);  // "±a" / "±b"

/// Throws InvalidSchedule on: coincident worldlines, non-increasing stage
/// times, signal speed outside (0, c], or measurement events of the two
/// wings that are not space-like separated (the offending pair is named).
Schedule build_schedule(const ScheduleConfig& config);

}  // namespace bellsim
