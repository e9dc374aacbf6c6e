#include <cmath>
#include <random>

#include "bellsim/errors.hpp"
#include "bellsim/harness.hpp"
#include "bellsim/observers.hpp"
#include "doctest.h"

using namespace bellsim;

namespace {

// Oracle: singlet cell straight from the formula.
double singlet_cell(const Angle& ta, const Angle& tb, Outcome a, Outcome b) {
  const double s = a == b ? -1.0 : 1.0;
  return 0.25 + s * std::cos(ta.radians() - tb.radians()) / 4.0;
}

struct Wing {
  ObserverHistory history;
  ObserverState state;
};

// Drives one observer through its inbound events with the given data.
// `setting_q` replaces the delta Q on the observer's own setting.
Wing drive(const ObserverState& start, const Schedule& sch, const Behavior& model, ObserverId o, std::size_t x,
           std::size_t y, Outcome a, Outcome b, std::optional<QUncertainty> setting_q = std::nullopt,
           Stage stop_after = Stage::t_c) {
  const LedgerVariables vars(model);
  auto inbound = sch.inbound(o);
  for (auto& e : inbound) {
    const auto& p = e.payload;
    const bool setting = p.variable == setting_variable(p.observer);
    if (setting) {
      e.payload.value = p.observer == ObserverId::alice ? x : y;
    } else {
      e.payload.value = static_cast<std::size_t>(p.observer == ObserverId::alice ? a : b);
    }
  }
  Wing w{{}, start};
  record(w.history, w.state);
  for (const auto& e : reception_order(sch.worldline(o), inbound)) {
    const Variable& v = e.payload.variable == "θa"   ? vars.setting_a
                        : e.payload.variable == "θb" ? vars.setting_b
                        : e.payload.variable == "±a" ? vars.outcome_a
                                                     : vars.outcome_b;
    QUncertainty q = QUncertainty::delta(v, *e.payload.value);
    if (setting_q && e.payload.variable == setting_q->variable.name()) q = *setting_q;
    if (stop_after < Stage::t_c && e.payload.kind == PayloadKind::message) break;
    if (stop_after < Stage::t_pm && e.payload.kind == PayloadKind::detection) break;
    w.state = receive(w.state, e, q);
    record(w.history, w.state);
  }
  return w;
}

const std::vector<Angle> kAlice{Angle(0, 1), Angle(1, 2)};
const std::vector<Angle> kBob{Angle(-3, 4), Angle(3, 4)};

}  // namespace

TEST_CASE("init_beliefs") {
  const Schedule sch = build_schedule({});
  SUBCASE("singlet: equal ledgers holding p(a,b|x,y)/4") {
    const Behavior m = singlet_behavior(kAlice, kBob);
    const BeliefPair p = init_beliefs(m, sch);
    CHECK(approx_equal(p.alice.ledger(), p.bob.ledger()));
    CHECK(render(p.alice.ledger()) == "P_A(±a,θa,±b,θb‖ψ0,t0)");
    CHECK(render(p.bob.ledger()) == "P_B(±a,θa,±b,θb‖ψ0,t0)");
    for (std::size_t k = 0; k < p.alice.ledger().size(); ++k) {
      const auto as = p.alice.ledger().assignment_of(k);
      const double expect = singlet_cell(kAlice[as[1]], kBob[as[3]], static_cast<Outcome>(as[0]),
                                         static_cast<Outcome>(as[2])) / 4.0;
      CHECK(std::abs(p.alice.ledger().probabilities()[k] - expect) < 1e-12);
    }
    CHECK(p.alice.stage() == Stage::t0);
    CHECK(p.alice.received().empty());
  }
  SUBCASE("PR box") {
    const BeliefPair p = init_beliefs(pr_box(), sch);
    CHECK(approx_equal(p.alice.ledger(), p.bob.ledger()));
  }
  SUBCASE("different priors are rejected") {
    const Behavior m = pr_box();
    SettingPrior skew{2, 2, {0.7, 0.1, 0.1, 0.1}};
    CHECK_THROWS_AS(init_beliefs(m, sch, SettingPrior::uniform(2, 2), skew), InvalidArgument);
    CHECK_NOTHROW(init_beliefs(m, sch, skew, skew));
  }
}

TEST_CASE("receive") {
  const Schedule sch = build_schedule({});
  const Behavior m = singlet_behavior(kAlice, kBob);
  const BeliefPair init = init_beliefs(m, sch);
  const LedgerVariables vars(m);

  SUBCASE("own setting with a delta Q") {
    const Wing w = drive(init.alice, sch, m, ObserverId::alice, 1, 0, Outcome::plus, Outcome::minus, std::nullopt,
                         Stage::t_theta);
    CHECK(w.state.stage() == Stage::t_theta);
    CHECK(render(w.state.ledger()) == "P_A(±a,±b,θb‖θa,ψ0,tθ)");
    CHECK(w.state.ledger().conditioner("θa")->value == 1);
  }
  SUBCASE("own detection") {
    const Wing w = drive(init.alice, sch, m, ObserverId::alice, 0, 0, Outcome::plus, Outcome::minus, std::nullopt,
                         Stage::t_pm);
    CHECK(render(w.state.ledger()) == "P_A(±b,θb‖±a,θa,ψ0,t±)");
    // p(±b,θb | +, θa=0) = p(+,b|0,y) p(y) / p(+|0) = p(+,b|0,y).
    const auto& d = w.state.ledger();
    for (std::size_t k = 0; k < d.size(); ++k) {
      const auto as = d.assignment_of(k);
      const double expect = singlet_cell(kAlice[0], kBob[as[1]], Outcome::plus, static_cast<Outcome>(as[0]));
      CHECK(std::abs(d.probabilities()[k] - expect) < 1e-12);
    }
    CHECK(information_local(w.state));
  }
  SUBCASE("two-point Q over the own setting") {
    const QUncertainty q{vars.setting_a, {0.5, 0.5}};
    const Wing w = drive(init.alice, sch, m, ObserverId::alice, 0, 0, Outcome::plus, Outcome::minus, q, Stage::t_theta);
    CHECK(render(w.state.ledger()) == "P_A(±a,θa,±b,θb‖ψ0,tθ)");
    CHECK(w.state.unresolved("θa"));
    const auto marg = marginal_over(w.state.ledger(), {"θa"});
    CHECK(std::abs(marg.probabilities()[0] - 0.5) < 1e-12);
    // The CHSH inquiry is still available.
    const auto inq = inquire(w.state, {"±a", "±b"}, {{"θa", 0}, {"θb", 1}});
    CHECK(render(inq) == "P_A(±a,±b|θa,θb|ψ0,tθ)");

    const QUncertainty skew{vars.setting_a, {0.8, 0.2}};
    const Wing w2 = drive(init.alice, sch, m, ObserverId::alice, 0, 0, Outcome::plus, Outcome::minus, skew,
                          Stage::t_theta);
    CHECK(std::abs(marginal_over(w2.state.ledger(), {"θa"}).probabilities()[0] - 0.8) < 1e-12);
  }
  SUBCASE("zero-probability report is a realism violation") {
    const Behavior same = singlet_behavior({Angle(0, 1)}, {Angle(0, 1)});
    const BeliefPair p = init_beliefs(same, sch);
    CHECK_THROWS_AS(drive(p.alice, sch, same, ObserverId::alice, 0, 0, Outcome::plus, Outcome::plus), RealismViolation);
  }
  SUBCASE("out-of-order reception and stage regression") {
    const Wing w = drive(init.alice, sch, m, ObserverId::alice, 0, 0, Outcome::plus, Outcome::minus);
    SpacetimeEvent setting = sch.setting_choice(ObserverId::alice);
    setting.payload.value = 0;
    CHECK_THROWS_AS(receive(w.state, setting, QUncertainty::delta(vars.setting_a, 0)), InvalidArgument);
    CHECK_THROWS_AS(receive(init.alice, setting, QUncertainty::delta(vars.setting_b, 0)), InvalidArgument);
  }
}

TEST_CASE("inquire") {
  const Schedule sch = build_schedule({});
  // Bob's grid contains Alice's first angle so equal settings can be posited.
  const std::vector<Angle> bob{Angle(0, 1), Angle(1, 3)};
  const Behavior m = singlet_behavior(kAlice, bob);
  const BeliefPair init = init_beliefs(m, sch);

  SUBCASE("at t0 both settings are posited") {
    for (std::size_t x = 0; x < 2; ++x) {
      for (std::size_t y = 0; y < 2; ++y) {
        const auto q = inquire(init.alice, {"±a", "±b"}, {{"θa", x}, {"θb", y}});
        CHECK(render(q) == "P_A(±a,±b|θa,θb|ψ0,t0)");
        for (std::size_t c = 0; c < 4; ++c) {
          CHECK(std::abs(q.probabilities()[c] - singlet_cell(kAlice[x], bob[y], cell_a(c), cell_b(c))) < 1e-12);
        }
      }
    }
  }
  const Wing w = drive(init.alice, sch, m, ObserverId::alice, 0, 0, Outcome::plus, Outcome::minus, std::nullopt,
                       Stage::t_pm);
  SUBCASE("at t± the distant outcome given a posited distant setting") {
    const auto q = inquire(w.state, {"±b"}, {{"θb", 0}});
    CHECK(render(q) == "P_A(±b|θb|±a,θa,ψ0,t±)");
    CHECK(q.probabilities()[1] == 1.0);
    CHECK(q.probabilities()[0] == 0.0);
    const auto q2 = inquire(w.state, {"±b"}, {{"θb", 1}});
    CHECK(std::abs(q2.probabilities()[1] - 2 * singlet_cell(kAlice[0], bob[1], Outcome::plus, Outcome::minus)) <
          1e-12);
  }
  SUBCASE("at t± the most probable distant setting given his outcome") {
    for (std::size_t b = 0; b < 2; ++b) {
      const auto q = inquire(w.state, {"θb"}, {{"±b", b}});
      CHECK(render(q) == "P_A(θb|±b|±a,θa,ψ0,t±)");
      double z = 0.0;
      double num[2];
      for (std::size_t y = 0; y < 2; ++y) {
        num[y] = singlet_cell(kAlice[0], bob[y], Outcome::plus, static_cast<Outcome>(b)) * 0.5;
        z += num[y];
      }
      for (std::size_t y = 0; y < 2; ++y) CHECK(std::abs(q.probabilities()[y] - num[y] / z) < 1e-12);
    }
  }
  SUBCASE("a posited value with zero probability") {
    const auto at_b = inquire(w.state, {"±b"}, {{"θb", 0}});
    CHECK(at_b.probabilities()[0] == 0.0);
    CHECK_THROWS_AS(inquire(w.state, {"θb"}, {{"±b", 0}, {"θb", 0}}), ImpossibleEvidence);
  }
  SUBCASE("factual variables cannot be posited") {
    CHECK_THROWS_AS(inquire(w.state, {"±b"}, {{"θa", 1}}), InvalidArgument);
  }
}

TEST_CASE("stage table") {
  const ScheduleConfig cfg;
  const Behavior m = singlet_behavior(kAlice, kBob);

  SUBCASE("standard run") {
    const TrialSetup setup(m, build_schedule(cfg));
    const TrialResult r = run_trial(setup, SettingsPolicy::free_choice(), 11, 0);
    const StageTable t = stage_table(r.alice, r.bob);
    REQUIRE(t.rows.size() == 4);
    CHECK(t.pattern() == "y,n,n,y");
    CHECK(t.rows[1].alice == "P_A(±a,±b,θb‖θa,ψ0,tθ)");
    CHECK(t.rows[1].bob == "P_B(±a,θa,±b‖θb,ψ0,tθ)");
  }
  SUBCASE("settings agreed in advance") {
    const TrialSetup setup(m, build_schedule(cfg));
    SettingsPolicy p = SettingsPolicy::fixed(1, 0);
    p.preset = true;
    const TrialResult r = run_trial(setup, p, 11, 0);
    CHECK(stage_table(r.alice, r.bob).pattern() == "y,y,n,y");
  }
  SUBCASE("no detections") {
    const BeliefPair init = init_beliefs(m, build_schedule(cfg));
    const ObserverHistory a{init.alice};
    const ObserverHistory b{init.bob};
    const StageTable t = stage_table(a, b);
    CHECK(t.rows.size() == 1);
    CHECK(t.pattern() == "y");
  }
  SUBCASE("incomplete run") {
    const BeliefPair init = init_beliefs(m, build_schedule(cfg));
    CHECK_THROWS_AS(stage_table({}, {init.bob}), InvalidArgument);
  }
}

TEST_CASE("pool") {
  const Schedule sch = build_schedule({});
  const Behavior m = singlet_behavior(kAlice, kBob);
  const BeliefPair init = init_beliefs(m, sch);

  SUBCASE("delta reports give a point mass on the data") {
    const Wing a = drive(init.alice, sch, m, ObserverId::alice, 1, 0, Outcome::minus, Outcome::plus);
    const Wing b = drive(init.bob, sch, m, ObserverId::bob, 1, 0, Outcome::minus, Outcome::plus);
    const PoolResult p = pool(a.state, b.state);
    CHECK(render(p.pooled) == "P_A∪B(±a,θa,±b,θb‖ψ0,tc)");
    CHECK(p.data == DataPoint{1, 0, Outcome::minus, Outcome::plus});
    double mass = 0.0;
    for (double v : p.pooled.probabilities()) mass += v == 1.0 ? 1.0 : (v == 0.0 ? 0.0 : 10.0);
    CHECK(mass == 1.0);
    CHECK(approx_equal(p.alice.ledger(), p.pooled));
    CHECK(approx_equal(p.bob.ledger(), p.pooled));
    CHECK(p.alice.stage() == Stage::t_c);
  }
  SUBCASE("report of an impossible outcome") {
    const Behavior same = singlet_behavior({Angle(0, 1)}, {Angle(0, 1)});
    const BeliefPair s = init_beliefs(same, sch);
    const Wing a = drive(s.alice, sch, same, ObserverId::alice, 0, 0, Outcome::plus, Outcome::plus, std::nullopt,
                         Stage::t_pm);
    const Wing b = drive(s.bob, sch, same, ObserverId::bob, 0, 0, Outcome::plus, Outcome::plus, std::nullopt,
                         Stage::t_pm);
    CHECK_THROWS_AS(pool(a.state, b.state), RealismViolation);
  }
  SUBCASE("identical t0 states") {
    const PoolResult p = pool(init.alice, init.bob);
    CHECK(approx_equal(p.pooled, init.alice.ledger()));
    CHECK(approx_equal(p.alice.ledger(), init.alice.ledger()));
    CHECK(p.alice.stage() == Stage::t0);
  }
}

TEST_CASE("retrodict") {
  const Schedule sch = build_schedule({});
  SUBCASE("equal angles, outcomes (+,-)") {
    const Behavior m = singlet_behavior({Angle(1, 4)}, {Angle(1, 4)});
    const TrialSetup setup(m, sch);
    const BeliefPair init = init_beliefs(m, sch);
    const Wing a = drive(init.alice, sch, m, ObserverId::alice, 0, 0, Outcome::plus, Outcome::minus);
    ObserverHistory h = a.history;
    const Wing b = drive(init.bob, sch, m, ObserverId::bob, 0, 0, Outcome::plus, Outcome::minus);
    record(h, pool(a.state, b.state).alice);
    const auto r = retrodict(h, "±a", Stage::t_theta);
    CHECK(render(r) == "P_A(±a|tθ|θa,±b,θb,tc)");
    CHECK(r.probabilities()[0] == 1.0);
  }
  SUBCASE("orthogonal angles") {
    const Behavior m = singlet_behavior({Angle(1, 2)}, {Angle(0, 1)});
    const BeliefPair init = init_beliefs(m, sch);
    const Wing a = drive(init.alice, sch, m, ObserverId::alice, 0, 0, Outcome::plus, Outcome::plus);
    ObserverHistory h = a.history;
    const Wing b = drive(init.bob, sch, m, ObserverId::bob, 0, 0, Outcome::plus, Outcome::plus);
    record(h, pool(a.state, b.state).alice);
    const auto r = retrodict(h, "±a", Stage::t_theta);
    CHECK(std::abs(r.probabilities()[0] - 0.5) < 1e-12);
  }
  SUBCASE("unresolved own setting gives a mixture") {
    const Behavior m = singlet_behavior({Angle(0, 1), Angle(1, 2)}, {Angle(0, 1)});
    const LedgerVariables vars(m);
    const BeliefPair init = init_beliefs(m, sch);
    const QUncertainty q{vars.setting_a, {0.5, 0.5}};
    const Wing a = drive(init.alice, sch, m, ObserverId::alice, 0, 0, Outcome::plus, Outcome::minus, q);
    ObserverHistory h = a.history;
    const Wing b = drive(init.bob, sch, m, ObserverId::bob, 0, 0, Outcome::plus, Outcome::minus, q);
    record(h, pool(a.state, b.state).alice);
    const auto r = retrodict(h, "±a", Stage::t_theta);
    // Mixture over θa of p(+|θa, b=-, θb=0): 1/2 * 1 + 1/2 * 1/2.
    CHECK(std::abs(r.probabilities()[0] - 0.75) < 1e-12);
    CHECK(render(r) == "P_A(±a|tθ|±b,θb,tc)");
  }
  SUBCASE("unknown targets") {
    const Behavior m = pr_box();
    const BeliefPair init = init_beliefs(m, sch);
    const Wing a = drive(init.alice, sch, m, ObserverId::alice, 0, 0, Outcome::plus, Outcome::plus);
    ObserverHistory h = a.history;
    const Wing b = drive(init.bob, sch, m, ObserverId::bob, 0, 0, Outcome::plus, Outcome::plus);
    record(h, pool(a.state, b.state).alice);
    CHECK_THROWS_AS(retrodict(h, "λ", Stage::t_theta), InvalidArgument);
    const Wing early = drive(init.alice, sch, m, ObserverId::alice, 0, 0, Outcome::plus, Outcome::plus, std::nullopt,
                             Stage::t_pm);
    CHECK_THROWS_AS(retrodict(early.history, "±a", Stage::t_theta), InvalidArgument);
  }
}

TEST_CASE("property: randomized runs") {
  const Schedule sch = build_schedule({});
  const Behavior models[] = {singlet_behavior(kAlice, kBob), pr_box(),
                             singlet_behavior({Angle(0, 1), Angle(1, 3), Angle(2, 3)}, {Angle(0, 1), Angle(1, 6)})};
  for (const Behavior& m : models) {
    const TrialSetup setup(m, sch);
    for (std::uint64_t t = 0; t < 200; ++t) {
      const TrialResult r = run_trial(setup, SettingsPolicy::free_choice(), 3, t);
      for (const ObserverHistory* h : {&r.alice, &r.bob}) {
        for (const auto& s : *h) {
          if (s.stage() < Stage::t_c) CHECK(information_local(s));
        }
        // Stages only move forward.
        for (std::size_t k = 1; k < h->size(); ++k) CHECK((*h)[k - 1].stage() < (*h)[k].stage());
      }
      CHECK(stage_table(r.alice, r.bob).pattern() == "y,n,n,y");

      // Counterfactual inquiry is plain conditioning in value.
      const ObserverState& s = r.alice[2];
      for (std::size_t y = 0; y < m.bob_count(); ++y) {
        const auto cf = inquire(s, {"±b"}, {{"θb", y}});
        const auto plain = marginal_over(condition(s.ledger(), "θb", y, Modality::factual), {"±b"});
        CHECK(max_abs_difference(cf, plain) == 0.0);
      }
      // Alice's outcome cannot depend on the posited distant setting before she detects.
      const ObserverState& before = r.alice[1];
      const auto base = inquire(before, {"±a"}, {{"θb", 0}});
      for (std::size_t y = 1; y < m.bob_count(); ++y) {
        CHECK(max_abs_difference(inquire(before, {"±a"}, {{"θb", y}}), base) < 1e-12);
      }
    }
  }
}
