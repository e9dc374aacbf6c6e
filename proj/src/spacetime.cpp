#include "bellsim/spacetime.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bellsim/errors.hpp"

namespace bellsim {

std::string_view short_name(ObserverId o) { return o == ObserverId::alice ? "A" : "B"; }

std::string_view to_string(PayloadKind k) {
  switch (k) {
    case PayloadKind::preparation: return "preparation";
    case PayloadKind::setting_choice: return "setting-choice";
    case PayloadKind::detection: return "detection";
    case PayloadKind::message: return "message";
  }
  return "?";
}

std::string_view to_string(Interval i) {
  switch (i) {
    case Interval::timelike: return "timelike";
    case Interval::lightlike: return "lightlike";
    case Interval::spacelike: return "spacelike";
  }
  return "?";
}

std::string_view setting_variable(ObserverId o) { return o == ObserverId::alice ? "θa" : "θb"; }
std::string_view outcome_variable(ObserverId o) { return o == ObserverId::alice ? "±a" : "±b"; }

Interval interval(const SpacetimeEvent& e1, const SpacetimeEvent& e2, double c) {
  const double ct = c * (e2.t - e1.t);
  const double dx = e2.x - e1.x;
  const double s = ct * ct - dx * dx;
  const double scale = ct * ct + dx * dx;
  if (std::abs(s) <= 1e-12 * scale) return Interval::lightlike;
  return s > 0 ? Interval::timelike : Interval::spacelike;
}

double reception_time(const SpacetimeEvent& e, const Worldline& w) {
  if (e.x == w.x) return e.t;
  return e.t + std::abs(e.x - w.x) / e.emission_speed;
}

std::vector<SpacetimeEvent> reception_order(const Worldline& w, std::span<const SpacetimeEvent> events) {
  std::vector<SpacetimeEvent> out(events.begin(), events.end());
  std::stable_sort(out.begin(), out.end(), [&](const SpacetimeEvent& a, const SpacetimeEvent& b) {
    const double ta = reception_time(a, w);
    const double tb = reception_time(b, w);
    if (ta != tb) return ta < tb;
    return a.index < b.index;
  });
  return out;
}

namespace {

std::string describe(const SpacetimeEvent& e) {
  std::ostringstream os;
  os << short_name(e.payload.observer) << " " << to_string(e.payload.kind) << " (t=" << e.t << ", x=" << e.x
     << ")";
  return os.str();
}

void check_stages(const StageTimes& s, std::string_view who) {
  if (!(s.t0 < s.t_theta && s.t_theta < s.t_pm && s.t_pm < s.t_c)) {
    std::ostringstream os;
    os << "stage times of " << who << " must satisfy t0 < t_theta < t_pm < t_c (got " << s.t0 << ", "
       << s.t_theta << ", " << s.t_pm << ", " << s.t_c << ")";
    throw InvalidSchedule(os.str());
  }
}

const SpacetimeEvent& find_event(std::span<const SpacetimeEvent> events, PayloadKind kind, ObserverId o) {
  for (const auto& e : events) {
    if (e.payload.kind == kind && (kind == PayloadKind::preparation || e.payload.observer == o)) return e;
  }
  throw InvalidArgument("schedule has no such event");
}

}  // namespace

const SpacetimeEvent& Schedule::preparation() const {
  return find_event(events_, PayloadKind::preparation, ObserverId::alice);
}
const SpacetimeEvent& Schedule::setting_choice(ObserverId o) const {
  return find_event(events_, PayloadKind::setting_choice, o);
}
const SpacetimeEvent& Schedule::detection(ObserverId o) const {
  return find_event(events_, PayloadKind::detection, o);
}

std::vector<const SpacetimeEvent*> Schedule::messages_from(ObserverId sender) const {
  std::vector<const SpacetimeEvent*> out;
  for (const auto& e : events_) {
    if (e.payload.kind == PayloadKind::message && e.payload.observer == sender) out.push_back(&e);
  }
  return out;
}

std::vector<SpacetimeEvent> Schedule::inbound(ObserverId o) const {
  std::vector<SpacetimeEvent> out;
  for (const auto& e : events_) {
    const auto& p = e.payload;
    const bool own = (p.kind == PayloadKind::setting_choice || p.kind == PayloadKind::detection) && p.observer == o;
    const bool addressed = p.kind == PayloadKind::message && p.recipient == o;
    if (own || addressed) out.push_back(e);
  }
  return out;
}

Schedule build_schedule(const ScheduleConfig& config) {
  if (!(config.c > 0.0) || !std::isfinite(config.c)) throw InvalidSchedule("c must be positive");
  if (!(config.signal_speed > 0.0) || config.signal_speed > config.c) {
    throw InvalidSchedule("signal speed must lie in (0, c]");
  }
  if (config.alice_x == config.bob_x) {
    throw InvalidSchedule("observer worldlines must be distinct (A and B share x)");
  }
  check_stages(config.alice, "A");
  check_stages(config.bob, "B");

  Schedule s;
  s.config_ = config;
  s.worldlines_[0] = Worldline{ObserverId::alice, config.alice_x};
  s.worldlines_[1] = Worldline{ObserverId::bob, config.bob_x};

  std::size_t next = 0;
  auto add = [&](double t, double x, Payload p, double speed) {
    s.events_.push_back(SpacetimeEvent{next++, t, x, std::move(p), speed});
  };

  // The source sits midway and is timed so both observers know psi0 by t0.
  const double half = std::abs(config.bob_x - config.alice_x) / 2.0;
  const double source_t = std::min(config.alice.t0, config.bob.t0) - half / config.c;
  add(source_t, (config.alice_x + config.bob_x) / 2.0,
      Payload{PayloadKind::preparation, ObserverId::alice, "ψ0", 0, std::nullopt}, config.c);

  for (ObserverId o : {ObserverId::alice, ObserverId::bob}) {
    const StageTimes& st = o == ObserverId::alice ? config.alice : config.bob;
    const double x = s.worldline(o).x;
    add(st.t_theta, x, Payload{PayloadKind::setting_choice, o, std::string(setting_variable(o)), std::nullopt, std::nullopt},
        config.c);
    add(st.t_pm, x, Payload{PayloadKind::detection, o, std::string(outcome_variable(o)), std::nullopt, std::nullopt},
        config.c);
  }
  for (ObserverId o : {ObserverId::alice, ObserverId::bob}) {
    const StageTimes& st = o == ObserverId::alice ? config.alice : config.bob;
    const double x = s.worldline(o).x;
    add(st.t_c, x, Payload{PayloadKind::message, o, std::string(setting_variable(o)), std::nullopt, other(o)},
        config.signal_speed);
    add(st.t_c, x, Payload{PayloadKind::message, o, std::string(outcome_variable(o)), std::nullopt, other(o)},
        config.signal_speed);
  }

  for (const SpacetimeEvent* a : {&s.setting_choice(ObserverId::alice), &s.detection(ObserverId::alice)}) {
    for (const SpacetimeEvent* b : {&s.setting_choice(ObserverId::bob), &s.detection(ObserverId::bob)}) {
      const Interval kind = interval(*a, *b, config.c);
      if (kind != Interval::spacelike) {
        throw InvalidSchedule(describe(*a) + " and " + describe(*b) + " are " + std::string(to_string(kind)) +
                              ", measurement events must be space-like separated");
      }
    }
  }
  return s;
}

}  // namespace bellsim
