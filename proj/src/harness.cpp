#include "bellsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "bellsim/errors.hpp"

namespace bellsim {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string pair_name(std::size_t x, std::size_t y) {
  return "(x=" + std::to_string(x) + ",y=" + std::to_string(y) + ")";
}

}  // namespace

// ---------------------------------------------------------------------------
// CounterRng

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix64(mix64(seed + kGolden) ^ (stream * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL))),
      stream_(stream) {}

std::uint64_t CounterRng::next() { return mix64(key_ + (++counter_) * kGolden); }

double CounterRng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::size_t CounterRng::below(std::size_t n) {
  if (n == 0) throw InvalidArgument("below(0)");
  return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
}

std::size_t sample_cell(std::span<const double, 4> slice, double u) {
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t cell = 0; cell < 4; ++cell) {
    if (slice[cell] <= 0.0) continue;
    cumulative += slice[cell];
    last_positive = cell;
    if (u < cumulative) return cell;
  }
  // u landed in the rounding gap above the final cumulative sum.
  return last_positive;
}

// ---------------------------------------------------------------------------
// TrialSetup

namespace {

std::vector<double> positions_of(const std::vector<Setting>& grid) {
  std::vector<double> out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.push_back(grid[i].angle ? grid[i].angle->radians() : static_cast<double>(i));
  }
  return out;
}

}  // namespace

TrialSetup::TrialSetup(Behavior model, Schedule schedule, QConfig q)
    : model_(std::move(model)),
      schedule_(std::move(schedule)),
      q_(q),
      vars_(model_),
      initial_(init_beliefs(model_, schedule_)),
      alice_positions_(positions_of(model_.alice_settings())),
      bob_positions_(positions_of(model_.bob_settings())) {
  if (!(q_.setting_width >= 0.0)) throw InvalidArgument("Q width must be nonnegative");
  for (std::size_t x = 0; x < model_.alice_count(); ++x) {
    for (std::size_t y = 0; y < model_.bob_count(); ++y) {
      preset_.push_back(init_beliefs_preset(model_, schedule_, x, y));
    }
  }
}

const BeliefPair& TrialSetup::preset_initial(std::size_t x, std::size_t y) const {
  if (x >= model_.alice_count() || y >= model_.bob_count()) throw InvalidArgument("preset pair outside the grid");
  return preset_[x * model_.bob_count() + y];
}

QUncertainty TrialSetup::setting_q(ObserverId o, std::size_t value) const {
  const Variable& v = vars_.setting(o);
  if (o == ObserverId::alice && q_.unresolved_local_setting) return QUncertainty::uniform(v);
  const auto& pos = o == ObserverId::alice ? alice_positions_ : bob_positions_;
  return QUncertainty::peaked(v, pos, value, q_.setting_width);
}

// ---------------------------------------------------------------------------
// Trials

namespace {

struct Draw {
  std::size_t x;
  std::size_t y;
  std::size_t cell;
};

Draw draw(const TrialSetup& setup, const SettingsPolicy& policy, CounterRng& rng) {
  const Behavior& m = setup.model();
  Draw d{};
  if (policy.draw == SettingsPolicy::Draw::uniform) {
    d.x = rng.below(m.alice_count());
    d.y = rng.below(m.bob_count());
  } else {
    if (policy.x >= m.alice_count() || policy.y >= m.bob_count()) {
      throw InvalidArgument("fixed settings " + pair_name(policy.x, policy.y) + " outside the grid");
    }
    d.x = policy.x;
    d.y = policy.y;
  }
  d.cell = sample_cell(m.slice(d.x, d.y), rng.uniform());
  return d;
}

TrialRecord make_record(const TrialSetup& setup, std::uint64_t trial, const Draw& d) {
  TrialRecord r;
  r.trial = trial;
  r.substream = trial;
  r.x = d.x;
  r.y = d.y;
  r.a = cell_a(d.cell);
  r.b = cell_b(d.cell);
  const Schedule& s = setup.schedule();
  for (ObserverId o : {ObserverId::alice, ObserverId::bob}) {
    const Worldline& w = s.worldline(o);
    ReceptionTimes& t = o == ObserverId::alice ? r.alice : r.bob;
    t.own_setting = reception_time(s.setting_choice(o), w);
    t.own_detection = reception_time(s.detection(o), w);
    const auto msgs = s.messages_from(other(o));
    t.remote_setting = reception_time(*msgs[0], w);
    t.remote_outcome = reception_time(*msgs[1], w);
  }
  return r;
}

std::size_t value_for(const Payload& p, const TrialRecord& r) {
  const bool is_setting = p.variable == setting_variable(p.observer);
  if (is_setting) return p.observer == ObserverId::alice ? r.x : r.y;
  return static_cast<std::size_t>(p.observer == ObserverId::alice ? r.a : r.b);
}

QUncertainty q_for(const TrialSetup& setup, const Payload& p, std::size_t value) {
  if (p.variable == setting_variable(p.observer)) return setup.setting_q(p.observer, value);
  return QUncertainty::delta(setup.variables().outcome(p.observer), value);
}

TrialResult run_trial_impl(const TrialSetup& setup, const SettingsPolicy& policy, std::uint64_t seed,
                           std::uint64_t trial, bool keep_history) {
  CounterRng rng(seed, trial);
  const Draw d = draw(setup, policy, rng);
  TrialResult result;
  result.record = make_record(setup, trial, d);

  const BeliefPair& start = policy.preset ? setup.preset_initial(d.x, d.y) : setup.initial();
  ObserverState finals[2] = {start.alice, start.bob};
  ObserverHistory* histories[2] = {&result.alice, &result.bob};

  for (ObserverId o : {ObserverId::alice, ObserverId::bob}) {
    const auto idx = static_cast<std::size_t>(o);
    auto inbound = setup.schedule().inbound(o);
    for (auto& e : inbound) e.payload.value = value_for(e.payload, result.record);
    ObserverState s = finals[idx];
    if (keep_history) record(*histories[idx], s);
    for (const auto& e : reception_order(setup.schedule().worldline(o), inbound)) {
      s = receive(std::move(s), e, q_for(setup, e.payload, *e.payload.value));
      if (keep_history) record(*histories[idx], s);
    }
    finals[idx] = std::move(s);
  }

  PoolResult pooled = pool(finals[0], finals[1]);
  result.pooled = pooled.data;
  if (keep_history) {
    record(result.alice, pooled.alice);
    record(result.bob, pooled.bob);
  }
  return result;
}

}  // namespace

TrialResult run_trial(const TrialSetup& setup, const SettingsPolicy& policy, std::uint64_t seed,
                      std::uint64_t trial) {
  return run_trial_impl(setup, policy, seed, trial, true);
}

TrialRecord sample_trial(const TrialSetup& setup, const SettingsPolicy& policy, std::uint64_t seed,
                         std::uint64_t trial) {
  CounterRng rng(seed, trial);
  return make_record(setup, trial, draw(setup, policy, rng));
}

// ---------------------------------------------------------------------------
// Datasets

Dataset Dataset::empty_for(const Behavior& b) {
  Dataset d;
  d.alice_settings = b.alice_settings();
  d.bob_settings = b.bob_settings();
  d.counts.assign(b.alice_count() * b.bob_count(), {0, 0, 0, 0});
  return d;
}

void Dataset::add(const TrialRecord& r, bool keep_record) {
  counts.at(r.x * bob_settings.size() + r.y)[cell_index(r.a, r.b)] += 1;
  if (keep_record) records.push_back(r);
}

std::uint64_t Dataset::trials(std::size_t x, std::size_t y) const {
  const auto& c = counts.at(x * bob_settings.size() + y);
  return c[0] + c[1] + c[2] + c[3];
}

std::uint64_t Dataset::total() const {
  std::uint64_t n = 0;
  for (const auto& c : counts) n += c[0] + c[1] + c[2] + c[3];
  return n;
}

Dataset merge(const Dataset& a, const Dataset& b) {
  if (a.alice_settings != b.alice_settings || a.bob_settings != b.bob_settings) {
    throw InvalidArgument("cannot merge datasets over different setting grids");
  }
  Dataset out = a;
  for (std::size_t i = 0; i < out.counts.size(); ++i) {
    for (std::size_t c = 0; c < 4; ++c) out.counts[i][c] += b.counts[i][c];
  }
  out.records.insert(out.records.end(), b.records.begin(), b.records.end());
  return out;
}

ExperimentResult run_experiment(const TrialSetup& setup, const ExperimentOptions& options) {
  if (options.trials_per_pair == 0) throw InvalidArgument("trials_per_pair must be at least 1");
  auto pairs = options.pairs;
  if (pairs.empty()) {
    for (std::size_t x = 0; x < setup.model().alice_count(); ++x) {
      for (std::size_t y = 0; y < setup.model().bob_count(); ++y) pairs.emplace_back(x, y);
    }
  }
  for (const auto& [x, y] : pairs) {
    if (x >= setup.model().alice_count() || y >= setup.model().bob_count()) {
      throw InvalidArgument("setting pair " + pair_name(x, y) + " outside the grid");
    }
  }

  const std::uint64_t n = options.trials_per_pair;
  const std::uint64_t total = n * pairs.size();
  unsigned threads = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : options.threads;
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, total));

  struct Chunk {
    Dataset data;
    std::exception_ptr error;
  };
  std::vector<Chunk> chunks(threads);
  auto work = [&](unsigned k) {
    const std::uint64_t begin = total * k / threads;
    const std::uint64_t end = total * (k + 1) / threads;
    Chunk& out = chunks[k];
    out.data = Dataset::empty_for(setup.model());
    if (options.keep_records) out.data.records.reserve(end - begin);
    try {
      for (std::uint64_t i = begin; i < end; ++i) {
        const auto& [x, y] = pairs[i / n];
        SettingsPolicy policy = SettingsPolicy::fixed(x, y);
        policy.preset = options.preset;
        const TrialRecord r = options.track_beliefs ? run_trial_impl(setup, policy, options.seed, i, false).record
                                                    : sample_trial(setup, policy, options.seed, i);
        out.data.add(r, options.keep_records);
      }
    } catch (...) {
      out.error = std::current_exception();
    }
  };

  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(work, k);
  }

  ExperimentResult result{Dataset::empty_for(setup.model()), std::nullopt};
  for (auto& c : chunks) {
    if (c.error) std::rethrow_exception(c.error);
    result.dataset = merge(result.dataset, c.data);
  }
  if (options.track_beliefs) {
    SettingsPolicy policy = SettingsPolicy::fixed(pairs[0].first, pairs[0].second);
    policy.preset = options.preset;
    result.first_trial = run_trial(setup, policy, options.seed, 0);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Estimation

EstimatedBehavior estimate_behavior(const Dataset& d) {
  const std::size_t nx = d.alice_settings.size();
  const std::size_t ny = d.bob_settings.size();
  std::vector<double> table(nx * ny * 4);
  std::vector<double> se(nx * ny * 4);
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y) {
      const std::uint64_t n = d.trials(x, y);
      if (n == 0) throw MissingData("no trials for setting pair " + pair_name(x, y));
      const auto& c = d.counts[x * ny + y];
      for (std::size_t cell = 0; cell < 4; ++cell) {
        const double p = static_cast<double>(c[cell]) / static_cast<double>(n);
        table[(x * ny + y) * 4 + cell] = p;
        se[(x * ny + y) * 4 + cell] = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
      }
    }
  }
  return {Behavior(d.alice_settings, d.bob_settings, std::move(table)), std::move(se)};
}

ChshEstimate estimate_chsh(const Dataset& d, const ChshSettings& s) {
  const std::size_t ny = d.bob_settings.size();
  ChshEstimate out;
  double variance = 0.0;
  const auto pairs = s.pairs();
  for (std::size_t k = 0; k < 4; ++k) {
    const auto [x, y] = pairs[k];
    if (x >= d.alice_settings.size() || y >= ny) throw InvalidArgument("CHSH pair " + pair_name(x, y) + " outside the grid");
    const std::uint64_t n = d.trials(x, y);
    if (n == 0) throw MissingData("no trials for CHSH pair " + pair_name(x, y));
    const auto& c = d.counts[x * ny + y];
    std::int64_t signed_sum = 0;
    for (std::size_t cell = 0; cell < 4; ++cell) {
      signed_sum += sign_of(cell_a(cell)) * sign_of(cell_b(cell)) * static_cast<std::int64_t>(c[cell]);
    }
    const double e = static_cast<double>(signed_sum) / static_cast<double>(n);
    out.value += ChshSettings::signs()[k] * e;
    variance += std::max(0.0, 1.0 - e * e) / static_cast<double>(n);
  }
  out.standard_error = std::sqrt(variance);
  return out;
}

// ---------------------------------------------------------------------------
// Classification

std::string_view to_string(Classification c) {
  switch (c) {
    case Classification::factual_local: return "factual-local";
    case Classification::counterfactual_local: return "counterfactual-local";
    case Classification::counterfactual_nonlocal: return "counterfactual-nonlocal";
    case Classification::not_applicable: return "not-applicable";
  }
  return "?";
}

ViolationReport classify_violation(const ObserverHistory& trace, Stage stage, const ChshEvidence& evidence) {
  auto snap = std::find_if(trace.begin(), trace.end(), [&](const ObserverState& s) { return s.stage() == stage; });
  if (snap == trace.end()) throw InvalidArgument("stage " + std::string(label(stage)) + " is not in the trace");
  const ObserverState& s = *snap;

  ViolationReport r;
  r.observer = s.id();
  r.stage = stage;
  r.s = evidence.s;
  r.standard_error = evidence.standard_error;

  const std::string remote(setting_variable(other(s.id())));
  std::vector<std::pair<std::string, std::size_t>> posits;
  bool any_known = false;
  for (ObserverId o : {ObserverId::alice, ObserverId::bob}) {
    const std::string name(setting_variable(o));
    const QUncertainty* q = s.measurement(name);
    const bool known = q != nullptr && q->is_delta();
    any_known = any_known || known;
    if (!known && s.ledger().free_position(name)) posits.emplace_back(name, 0);
  }

  // Pose the CHSH inquiry with the unknown settings posited, and read the
  // tags back from the resulting table.
  std::vector<std::string> targets;
  for (const auto& v : s.ledger().free()) {
    if (v.name() == "±a" || v.name() == "±b") targets.push_back(v.name());
  }
  if (!posits.empty()) {
    const TaggedJoint q = inquire(s, targets, posits);
    r.inquiry = render(q);
    for (const auto& c : q.conditioners()) {
      if (c.modality != Modality::counterfactual) continue;
      r.counterfactual.push_back(c.name());
      if (c.name() == remote) r.nonlocal.push_back(c.name());
    }
  } else {
    r.inquiry = render(s.ledger());
  }

  if (!r.nonlocal.empty()) {
    r.classification = Classification::counterfactual_nonlocal;
  } else if (!r.counterfactual.empty()) {
    r.classification = Classification::counterfactual_local;
  } else if (evidence.experiments <= 1) {
    r.classification = Classification::not_applicable;
  } else if (evidence.posit_alternates && any_known) {
    r.classification = Classification::counterfactual_local;
    for (ObserverId o : {ObserverId::alice, ObserverId::bob}) r.counterfactual.emplace_back(setting_variable(o));
  } else {
    r.classification = Classification::factual_local;
  }
  r.exceeds_bound = r.classification != Classification::not_applicable && std::abs(evidence.s) > 2.0;
  return r;
}

}  // namespace bellsim
