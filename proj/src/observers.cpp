#include "bellsim/observers.hpp"

#include <algorithm>
#include <cmath>

#include "bellsim/errors.hpp"

namespace bellsim {

struct ObserverAccess {
  static ObserverState make(ObserverId id, const Worldline& w, TaggedJoint ledger) {
    ObserverState s;
    s.id_ = id;
    s.worldline_ = w;
    s.ledger_ = std::move(ledger);
    return s;
  }
  static TaggedJoint& ledger(ObserverState& s) { return s.ledger_; }
  static Stage& stage(ObserverState& s) { return s.stage_; }
  static double& clock(ObserverState& s) { return s.clock_; }
  static std::vector<SpacetimeEvent>& received(ObserverState& s) { return s.received_; }
  static std::vector<QUncertainty>& measurements(ObserverState& s) { return s.measurements_; }
  static std::vector<std::string>& preset(ObserverState& s) { return s.preset_; }
};

namespace {

constexpr std::string_view kStageLabels[] = {"t0", "tθ", "t±", "tc"};

bool is_stage_name(std::string_view name) {
  return std::find(std::begin(kStageLabels), std::end(kStageLabels), name) != std::end(kStageLabels);
}

TaggedJoint with_stage(const TaggedJoint& d, Stage s) {
  std::vector<Conditioner> conds(d.conditioners().begin(), d.conditioners().end());
  bool replaced = false;
  for (auto& c : conds) {
    if (is_stage_name(c.name())) {
      c = Conditioner{stage_variable(s), 0, Modality::factual};
      replaced = true;
    }
  }
  if (!replaced) conds.push_back(Conditioner{stage_variable(s), 0, Modality::factual});
  return d.with_conditioners(std::move(conds));
}

Stage stage_for(PayloadKind k) {
  switch (k) {
    case PayloadKind::preparation: return Stage::t0;
    case PayloadKind::setting_choice: return Stage::t_theta;
    case PayloadKind::detection: return Stage::t_pm;
    case PayloadKind::message: return Stage::t_c;
  }
  return Stage::t0;
}

TaggedJoint initial_joint(const Behavior& model, const SettingPrior& prior, std::string_view observer) {
  const LedgerVariables vars(model);
  const std::size_t nx = model.alice_count();
  const std::size_t ny = model.bob_count();
  std::vector<double> p(2 * nx * 2 * ny);
  // Canonical layout: (±a, θa, ±b, θb), last index fastest.
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t x = 0; x < nx; ++x) {
      for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t y = 0; y < ny; ++y) {
          p[((a * nx + x) * 2 + b) * ny + y] =
              model.p(x, y, static_cast<Outcome>(a), static_cast<Outcome>(b)) * prior.p[x * ny + y];
        }
      }
    }
  }
  return TaggedJoint(std::string(observer), vars.canonical(),
                     {Conditioner{preparation_variable(), 0, Modality::factual},
                      Conditioner{stage_variable(Stage::t0), 0, Modality::factual}},
                     std::move(p));
}

bool same_distribution(const QUncertainty& a, const QUncertainty& b) {
  if (!(a.variable == b.variable) || a.distribution.size() != b.distribution.size()) return false;
  for (std::size_t i = 0; i < a.distribution.size(); ++i) {
    if (std::abs(a.distribution[i] - b.distribution[i]) > kProbabilityTolerance) return false;
  }
  return true;
}

// Folds one report of a variable into the ledger. Returns false when the
// report merely repeats a fact already held.
bool absorb(ObserverState& s, const QUncertainty& q) {
  const std::string& name = q.variable.name();
  TaggedJoint& ledger = ObserverAccess::ledger(s);
  auto& known = ObserverAccess::measurements(s);

  if (const Conditioner* c = ledger.conditioner(name)) {
    const auto v = q.delta_value();
    if (c->modality == Modality::factual && v && *v == c->value) return false;
    throw RealismViolation(std::string(short_name(s.id())) + " already holds " + name + "=" +
                           c->variable.label(c->value) + ", contradicted by a report of a different value");
  }
  if (!ledger.free_position(name)) {
    throw InvalidArgument("variable '" + name + "' is not part of the ledger");
  }
  if (const QUncertainty* prev = s.measurement(name); prev != nullptr && same_distribution(*prev, q)) {
    return false;
  }

  try {
    if (const auto v = q.delta_value()) {
      ledger = condition(ledger, name, *v, Modality::factual);
    } else {
      const auto order = ledger.free_names();
      ledger = reorder(product(conditional_table(ledger, {name}), q.as_joint(ledger.observer())), order);
    }
  } catch (const ImpossibleEvidence& e) {
    throw RealismViolation(std::string(short_name(s.id())) + " received a zero-probability report: " + e.what());
  }
  auto it = std::find_if(known.begin(), known.end(),
                         [&](const QUncertainty& k) { return k.variable.name() == name; });
  if (it == known.end()) {
    known.push_back(q);
  } else {
    *it = q;
  }
  return true;
}

}  // namespace

std::string_view label(Stage s) { return kStageLabels[static_cast<std::size_t>(s)]; }

Variable stage_variable(Stage s) {
  static const Variable vars[] = {Variable("t0", {"t0"}), Variable("tθ", {"tθ"}), Variable("t±", {"t±"}),
                                  Variable("tc", {"tc"})};
  return vars[static_cast<std::size_t>(s)];
}

Variable preparation_variable() {
  static const Variable v("ψ0", {"ψ0"});
  return v;
}

namespace {

Variable outcome_var(std::string name) {
  return Variable(std::move(name), {"+", "-"});
}

Variable setting_var(std::string name, const std::vector<Setting>& grid) {
  std::vector<std::string> labels;
  labels.reserve(grid.size());
  for (const auto& s : grid) labels.push_back(s.label);
  return Variable(std::move(name), std::move(labels));
}

}  // namespace

LedgerVariables::LedgerVariables(const Behavior& b)
    : outcome_a(outcome_var("±a")),
      setting_a(setting_var("θa", b.alice_settings())),
      outcome_b(outcome_var("±b")),
      setting_b(setting_var("θb", b.bob_settings())) {}

std::vector<std::string> LedgerVariables::canonical_names() { return {"±a", "θa", "±b", "θb"}; }

// ---------------------------------------------------------------------------
// QUncertainty

QUncertainty QUncertainty::delta(Variable v, std::size_t at) {
  if (at >= v.size()) throw InvalidArgument("delta outside the domain of '" + v.name() + "'");
  std::vector<double> d(v.size(), 0.0);
  d[at] = 1.0;
  return {std::move(v), std::move(d)};
}

QUncertainty QUncertainty::uniform(Variable v) {
  const std::size_t n = v.size();
  return {std::move(v), std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

QUncertainty QUncertainty::peaked(Variable v, std::span<const double> positions, std::size_t center, double width) {
  if (positions.size() != v.size()) throw InvalidArgument("peaked Q needs one position per domain value");
  if (!(width >= 0.0)) throw InvalidArgument("peaked Q width must be nonnegative");
  if (width == 0.0) return delta(std::move(v), center);
  std::vector<double> w(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = positions[i] - positions[center];
    w[i] = std::exp(-d * d / (2.0 * width * width));
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return {std::move(v), std::move(w)};
}

std::optional<std::size_t> QUncertainty::delta_value() const {
  std::optional<std::size_t> at;
  for (std::size_t i = 0; i < distribution.size(); ++i) {
    if (distribution[i] == 1.0) {
      at = i;
    } else if (distribution[i] != 0.0) {
      return std::nullopt;
    }
  }
  return at;
}

TaggedJoint QUncertainty::as_joint(std::string observer) const {
  return TaggedJoint(std::move(observer), {variable}, {}, distribution);
}

// ---------------------------------------------------------------------------
// SettingPrior

SettingPrior SettingPrior::uniform(std::size_t alice_count, std::size_t bob_count) {
  const std::size_t n = alice_count * bob_count;
  return {alice_count, bob_count, std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

void SettingPrior::validate() const {
  if (p.size() != alice_count * bob_count || p.empty()) throw InvalidArgument("setting prior has the wrong size");
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw InvalidArgument("setting prior entries must be nonnegative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance) throw InvalidArgument("setting prior does not sum to 1");
}

// ---------------------------------------------------------------------------
// ObserverState

const QUncertainty* ObserverState::measurement(std::string_view variable) const {
  for (const auto& q : measurements_) {
    if (q.variable.name() == variable) return &q;
  }
  return nullptr;
}

bool ObserverState::unresolved(std::string_view variable) const {
  const QUncertainty* q = measurement(variable);
  return q != nullptr && !q->is_delta();
}

BeliefPair init_beliefs(const Behavior& model, const Schedule& schedule, const SettingPrior& alice_prior,
                        const SettingPrior& bob_prior) {
  alice_prior.validate();
  bob_prior.validate();
  if (alice_prior.alice_count != model.alice_count() || alice_prior.bob_count != model.bob_count()) {
    throw InvalidArgument("setting prior does not match the behavior's grid");
  }
  if (!(alice_prior == bob_prior)) {
    throw InvalidArgument("observers must start from the same setting prior: ledgers have to agree at t0");
  }
  const TaggedJoint joint = initial_joint(model, alice_prior, "A");
  return {ObserverAccess::make(ObserverId::alice, schedule.worldline(ObserverId::alice), joint),
          ObserverAccess::make(ObserverId::bob, schedule.worldline(ObserverId::bob), joint.with_observer("B"))};
}

BeliefPair init_beliefs(const Behavior& model, const Schedule& schedule) {
  const auto prior = SettingPrior::uniform(model.alice_count(), model.bob_count());
  return init_beliefs(model, schedule, prior, prior);
}

BeliefPair init_beliefs_preset(const Behavior& model, const Schedule& schedule, std::size_t x, std::size_t y) {
  if (x >= model.alice_count() || y >= model.bob_count()) throw InvalidArgument("preset settings outside the grid");
  BeliefPair pair = init_beliefs(model, schedule);
  for (ObserverState* s : {&pair.alice, &pair.bob}) {
    TaggedJoint& ledger = ObserverAccess::ledger(*s);
    ledger = condition(ledger, "θb", y, Modality::factual);
    ledger = condition(ledger, "θa", x, Modality::factual);
    ObserverAccess::preset(*s) = {"θa", "θb"};
    const LedgerVariables vars(model);
    ObserverAccess::measurements(*s) = {QUncertainty::delta(vars.setting_a, x), QUncertainty::delta(vars.setting_b, y)};
  }
  return pair;
}

ObserverState receive(const ObserverState& s, const SpacetimeEvent& e, const QUncertainty& q) {
  return receive(ObserverState(s), e, q);
}

ObserverState receive(ObserverState&& s, const SpacetimeEvent& e, const QUncertainty& q) {
  if (q.variable.name() != e.payload.variable) {
    throw InvalidArgument("Q is over '" + q.variable.name() + "' but the event reports '" + e.payload.variable + "'");
  }
  const double t = reception_time(e, s.worldline());
  if (t < s.clock()) throw InvalidArgument("events must be received in reception-time order");
  const Stage next = stage_for(e.payload.kind);
  if (next < s.stage()) {
    throw InvalidArgument("event '" + e.payload.variable + "' would move " + std::string(short_name(s.id())) +
                          " back from stage " + std::string(label(s.stage())));
  }

  ObserverState out = std::move(s);
  absorb(out, q);
  ObserverAccess::received(out).push_back(e);
  ObserverAccess::clock(out) = t;
  ObserverAccess::stage(out) = next;
  ObserverAccess::ledger(out) = with_stage(out.ledger(), next);
  return out;
}

TaggedJoint inquire(const ObserverState& s, const std::vector<std::string>& targets,
                    const std::vector<std::pair<std::string, std::size_t>>& assignments) {
  TaggedJoint d = s.ledger();
  for (const auto& [name, value] : assignments) {
    if (!d.free_position(name)) {
      throw InvalidArgument("cannot posit '" + name + "': it is not free in " + render(d));
    }
  }
  for (auto it = assignments.rbegin(); it != assignments.rend(); ++it) {
    d = condition(d, it->first, it->second, Modality::counterfactual);
  }
  for (const auto& name : d.free_names()) {
    if (std::find(targets.begin(), targets.end(), name) == targets.end()) d = marginalize(d, name);
  }
  return reorder(d, targets);
}

void record(ObserverHistory& history, const ObserverState& s) {
  if (!history.empty() && history.back().stage() == s.stage()) {
    history.back() = s;
  } else {
    history.push_back(s);
  }
}

bool information_local(const ObserverState& s) {
  for (const auto& c : s.ledger().conditioners()) {
    if (c.modality != Modality::factual) continue;
    if (c.name() == preparation_variable().name() || is_stage_name(c.name())) continue;
    if (std::find(s.preset().begin(), s.preset().end(), c.name()) != s.preset().end()) continue;
    const bool seen = std::any_of(s.received().begin(), s.received().end(), [&](const SpacetimeEvent& e) {
      return e.payload.variable == c.name() && reception_time(e, s.worldline()) <= s.clock();
    });
    if (!seen) return false;
  }
  return true;
}

std::string StageTable::pattern() const {
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) out += ',';
    out += rows[i].equal ? 'y' : 'n';
  }
  return out;
}

StageTable stage_table(const ObserverHistory& alice, const ObserverHistory& bob) {
  if (alice.empty() || bob.empty()) throw InvalidArgument("incomplete run: empty history");
  if (alice.size() != bob.size()) throw InvalidArgument("incomplete run: observers reached different stages");
  StageTable table;
  for (std::size_t i = 0; i < alice.size(); ++i) {
    if (alice[i].stage() != bob[i].stage()) throw InvalidArgument("incomplete run: stage sequences differ");
    table.rows.push_back(StageRow{alice[i].stage(), render(alice[i].ledger()), render(bob[i].ledger()),
                                  approx_equal(alice[i].ledger(), bob[i].ledger(), kProbabilityTolerance)});
  }
  return table;
}

PoolResult pool(const ObserverState& alice, const ObserverState& bob) {
  if (alice.id() == bob.id()) throw InvalidArgument("pool needs one state per observer");
  const ObserverState& a_in = alice.id() == ObserverId::alice ? alice : bob;
  const ObserverState& b_in = alice.id() == ObserverId::alice ? bob : alice;
  if (a_in.measurements().empty() && b_in.measurements().empty()) {
    // Nothing to share: the common ledger stands as it is.
    if (!approx_equal(a_in.ledger(), b_in.ledger())) {
      throw InvalidArgument("pool: observers without measurements must hold the same ledger");
    }
    TaggedJoint shared = a_in.ledger().with_observer("A∪B");
    const Assignment best = argmax(reorder(shared, LedgerVariables::canonical_names()));
    DataPoint data{best[1], best[3], static_cast<Outcome>(best[0]), static_cast<Outcome>(best[2])};
    return {a_in, b_in, std::move(shared), data};
  }
  if (a_in.stage() < Stage::t_pm || b_in.stage() < Stage::t_pm) {
    throw InvalidArgument("pool requires both observers to have completed their measurements");
  }

  ObserverState a = a_in;
  ObserverState b = b_in;
  for (auto [self, peer] : {std::pair{&a, &b_in}, std::pair{&b, &a_in}}) {
    for (const QUncertainty& q : peer->measurements()) {
      if (const QUncertainty* mine = self->measurement(q.variable.name())) {
        if (!same_distribution(*mine, q)) {
          throw RealismViolation("observers disagree on " + q.variable.name());
        }
        continue;
      }
      absorb(*self, q);
    }
  }

  const auto names = LedgerVariables::canonical_names();
  std::vector<Variable> vars;
  std::vector<double> table{1.0};
  for (const auto& name : names) {
    const QUncertainty* q = a.measurement(name);
    if (q == nullptr) throw InvalidArgument("pool: no report of " + name);
    std::vector<double> next;
    next.reserve(table.size() * q->distribution.size());
    for (double t : table) {
      for (double v : q->distribution) next.push_back(t * v);
    }
    table = std::move(next);
    vars.push_back(q->variable);
  }
  TaggedJoint pooled("A∪B", vars,
                     {Conditioner{preparation_variable(), 0, Modality::factual},
                      Conditioner{stage_variable(Stage::t_c), 0, Modality::factual}},
                     std::move(table));

  for (ObserverState* s : {&a, &b}) {
    ObserverAccess::ledger(*s) = pooled.with_observer(std::string(short_name(s->id())));
    ObserverAccess::stage(*s) = Stage::t_c;
  }
  const Assignment best = argmax(pooled);
  DataPoint data{best[1], best[3], static_cast<Outcome>(best[0]), static_cast<Outcome>(best[2])};
  return {std::move(a), std::move(b), std::move(pooled), data};
}

TaggedJoint retrodict(const ObserverHistory& history, std::string_view target, Stage past) {
  if (history.empty() || history.back().stage() != Stage::t_c) {
    throw InvalidArgument("retrodiction needs a history that reached t_c");
  }
  const ObserverState& now = history.back();
  const auto names = LedgerVariables::canonical_names();
  if (std::find(names.begin(), names.end(), target) == names.end() || now.measurement(target) == nullptr) {
    throw InvalidArgument("'" + std::string(target) + "' is not part of the recorded data");
  }
  auto snap = std::find_if(history.begin(), history.end(), [&](const ObserverState& s) { return s.stage() == past; });
  if (snap == history.end()) throw InvalidArgument("stage " + std::string(label(past)) + " is not in the history");

  TaggedJoint d = snap->ledger();
  if (!d.free_position(target)) {
    throw InvalidArgument("'" + std::string(target) + "' was already known at " + std::string(label(past)));
  }
  std::vector<Conditioner> known;
  for (const auto& name : names) {
    if (name == target) continue;
    const QUncertainty* q = now.measurement(name);
    const auto v = q != nullptr ? q->delta_value() : std::nullopt;
    if (d.free_position(name)) {
      d = v ? condition(d, name, *v, Modality::factual) : marginalize(d, name);
    }
    if (v) known.push_back(Conditioner{q->variable, *v, Modality::factual});
  }
  known.insert(known.begin(), Conditioner{stage_variable(past), 0, Modality::counterfactual});
  known.push_back(Conditioner{stage_variable(Stage::t_c), 0, Modality::factual});
  return d.with_conditioners(std::move(known));
}

}  // namespace bellsim
