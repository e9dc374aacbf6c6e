#include <cmath>
#include <numbers>
#include <random>

#include "bellsim/config.hpp"
#include "bellsim/errors.hpp"
#include "bellsim/models.hpp"
#include "doctest.h"

using namespace bellsim;

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

// Oracle straight from the singlet formula, with the literal cosine.
double singlet_cell(double ta, double tb, Outcome a, Outcome b) {
  const double s = a == b ? -1.0 : 1.0;
  return 0.25 + s * std::cos(ta - tb) / 4.0;
}

std::array<double, 2> random_response(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double p = u(rng) < 0.3 ? std::round(u(rng)) : u(rng);
  return {p, 1.0 - p};
}

LhvModel random_lhv(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> nl(1, 6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LhvModel m;
  const std::size_t n = nl(rng);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m.prior.push_back(u(rng) + 1e-3);
    z += m.prior.back();
  }
  for (auto& p : m.prior) p /= z;
  for (std::size_t i = 0; i < n * 2; ++i) {
    m.alice_response.push_back(random_response(rng));
    m.bob_response.push_back(random_response(rng));
  }
  return m;
}

Behavior random_behavior(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> t;
  for (int s = 0; s < 4; ++s) {
    double c[4];
    double z = 0.0;
    for (double& x : c) {
      x = u(rng);
      z += x;
    }
    for (double x : c) t.push_back(x / z);
  }
  return Behavior(binary_settings(), binary_settings(), t);
}

double s_by_hand(const Behavior& b) {
  auto e = [&](std::size_t x, std::size_t y) {
    const auto s = b.slice(x, y);
    return s[0] - s[1] - s[2] + s[3];
  };
  return e(0, 0) + e(1, 0) + e(0, 1) - e(1, 1);
}

}  // namespace

TEST_CASE("angles parse, print and take exact cosines") {
  CHECK(Angle::parse("0") == Angle(0, 1));
  CHECK(Angle::parse("pi") == Angle(1, 1));
  CHECK(Angle::parse("-pi/4") == Angle(-1, 4));
  CHECK(Angle::parse("3pi/4") == Angle(3, 4));
  CHECK(Angle::parse("3*pi/4") == Angle(6, 8));
  CHECK(Angle(6, 8).label() == "3pi/4");
  CHECK(Angle(-3, 4).label() == "-3pi/4");
  CHECK_THROWS_AS(Angle::parse("pi/0"), InvalidArgument);
  CHECK_THROWS_AS(Angle::parse("0.7"), InvalidArgument);
  CHECK(Angle(1, 2).cos() == 0.0);
  CHECK(Angle(1, 1).cos() == -1.0);
  CHECK(Angle(1, 3).cos() == 0.5);
  CHECK(Angle(-2, 3).cos() == -0.5);
  CHECK(std::abs(Angle(1, 4).cos() - std::cos(std::numbers::pi / 4)) < 1e-15);
}

TEST_CASE("singlet behavior examples") {
  SUBCASE("equal angles") {
    const Behavior b = singlet_behavior({Angle(1, 5)}, {Angle(1, 5)});
    CHECK(b.p(0, 0, Outcome::plus, Outcome::plus) == 0.0);
    CHECK(b.p(0, 0, Outcome::plus, Outcome::minus) == 0.5);
  }
  SUBCASE("difference pi") {
    const Behavior b = singlet_behavior({Angle(1, 1)}, {Angle(0, 1)});
    CHECK(b.p(0, 0, Outcome::plus, Outcome::plus) == 0.5);
    CHECK(b.p(0, 0, Outcome::plus, Outcome::minus) == 0.0);
  }
  SUBCASE("difference pi/2") {
    const Behavior b = singlet_behavior({Angle(1, 2)}, {Angle(0, 1)});
    for (std::size_t c = 0; c < 4; ++c) CHECK(b.slice(0, 0)[c] == 0.25);
  }
  SUBCASE("grid against the formula") {
    std::vector<Angle> grid;
    for (int k = -6; k <= 6; ++k) grid.emplace_back(k, 6);
    const Behavior b = singlet_behavior(grid, grid);
    for (std::size_t x = 0; x < grid.size(); ++x) {
      for (std::size_t y = 0; y < grid.size(); ++y) {
        for (std::size_t c = 0; c < 4; ++c) {
          CHECK(std::abs(b.slice(x, y)[c] -
                         singlet_cell(grid[x].radians(), grid[y].radians(), cell_a(c), cell_b(c))) < 1e-12);
        }
        CHECK(std::abs(correlator(b, x, y) + std::cos(grid[x].radians() - grid[y].radians())) < 1e-12);
      }
    }
  }
}

TEST_CASE("PR box") {
  const Behavior b = pr_box();
  CHECK(b.p(0, 0, Outcome::plus, Outcome::plus) == 0.5);
  CHECK(b.p(0, 0, Outcome::minus, Outcome::minus) == 0.5);
  CHECK(b.p(1, 1, Outcome::plus, Outcome::minus) == 0.5);
  CHECK(b.p(1, 1, Outcome::minus, Outcome::plus) == 0.5);
  CHECK(b.p(1, 1, Outcome::plus, Outcome::plus) == 0.0);
  for (std::size_t x = 0; x < 2; ++x) {
    for (std::size_t y = 0; y < 2; ++y) {
      const auto s = b.slice(x, y);
      CHECK(s[0] + s[1] == 0.5);
      CHECK(s[0] + s[2] == 0.5);
    }
  }
  CHECK(correlator(b, 1, 1) == -1.0);
  CHECK(chsh_value(b, {}) == 4.0);
  CHECK(s_by_hand(b) == 4.0);
}

TEST_CASE("LHV behaviors") {
  SUBCASE("deterministic both plus") {
    LhvModel m{{1.0}, 2, 2, {{1, 0}, {1, 0}}, {{1, 0}, {1, 0}}};
    const Behavior b = lhv_behavior(m);
    for (std::size_t x = 0; x < 2; ++x) {
      for (std::size_t y = 0; y < 2; ++y) CHECK(b.p(x, y, Outcome::plus, Outcome::plus) == 1.0);
    }
    CHECK(chsh_value(b, {}) == 2.0);
  }
  SUBCASE("mixture of both-plus and both-minus") {
    LhvModel m{{0.5, 0.5}, 2, 2, {{1, 0}, {1, 0}, {0, 1}, {0, 1}}, {{1, 0}, {1, 0}, {0, 1}, {0, 1}}};
    const Behavior b = lhv_behavior(m);
    CHECK(b.p(0, 1, Outcome::plus, Outcome::plus) == 0.5);
    CHECK(b.p(0, 1, Outcome::minus, Outcome::minus) == 0.5);
    CHECK(correlator(b, 1, 0) == 1.0);
  }
  SUBCASE("validation") {
    LhvModel bad{{0.5, 0.6}, 2, 2, {{1, 0}, {1, 0}, {1, 0}, {1, 0}}, {{1, 0}, {1, 0}, {1, 0}, {1, 0}}};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    LhvModel short_table{{1.0}, 2, 2, {{1, 0}}, {{1, 0}, {1, 0}}};
    CHECK_THROWS_AS(short_table.validate(), InvalidArgument);
  }
}

TEST_CASE("CHSH values") {
  SUBCASE("singlet with theta_b in {pi/4, -pi/4} reaches 2 sqrt 2 in magnitude") {
    const Behavior b = singlet_behavior({Angle(0, 1), Angle(1, 2)}, {Angle(1, 4), Angle(-1, 4)});
    CHECK(std::abs(std::abs(chsh_value(b, {})) - 2 * kSqrt2) < 1e-12);
    CHECK(std::abs(chsh_value(b, {}) - s_by_hand(b)) < 1e-15);
  }
  SUBCASE("default grid gives +2 sqrt 2") {
    const ExperimentConfig cfg;
    CHECK(std::abs(chsh_value(cfg.behavior(), cfg.chsh) - 2 * kSqrt2) < 1e-12);
  }
  SUBCASE("settings outside the grid") {
    ChshSettings s;
    s.x1 = 5;
    CHECK_THROWS_AS(chsh_value(pr_box(), s), InvalidArgument);
    CHECK_THROWS_AS(correlator(pr_box(), 2, 0), InvalidArgument);
  }
  SUBCASE("uniform behavior has zero correlators") {
    const Behavior b = uniform_behavior(binary_settings(), binary_settings());
    CHECK(correlator(b, 1, 1) == 0.0);
  }
}

TEST_CASE("deterministic strategies bound CHSH by 2") {
  const auto strategies = deterministic_strategies();
  REQUIRE(strategies.size() == 16);
  double best = 0.0;
  for (const auto& m : strategies) best = std::max(best, std::abs(chsh_value(lhv_behavior(m), {})));
  CHECK(best == 2.0);
}

TEST_CASE("chsh_expectation") {
  const std::array<double, 4> uniform{0.25, 0.25, 0.25, 0.25};
  const Behavior singlet = singlet_behavior({Angle(0, 1), Angle(1, 2)}, {Angle(-3, 4), Angle(3, 4)});
  CHECK(std::abs(chsh_expectation(singlet, {}, uniform) - kSqrt2 / 2) < 1e-12);
  CHECK(std::abs(chsh_expectation(pr_box(), {}, {0, 0, 0, 1}) - 1.0) < 1e-15);  // -1 * E11 = +1
  CHECK(chsh_expectation(pr_box(), {}, {1, 0, 0, 0}) == correlator(pr_box(), 0, 0));
  CHECK_THROWS_AS(chsh_expectation(pr_box(), {}, {0.5, 0.5, 0.5, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(chsh_expectation(pr_box(), {}, {1.5, -0.5, 0.0, 0.0}), InvalidArgument);
}

TEST_CASE("no-signaling checks") {
  const Behavior singlet = singlet_behavior({Angle(0, 1), Angle(1, 3)}, {Angle(-3, 4), Angle(1, 5), Angle(1, 1)});
  const auto r = check_no_signaling(singlet);
  CHECK(r.passes);
  CHECK(r.marginal_setting_independence);
  for (double p : r.alice_plus) CHECK(std::abs(p - 0.5) < 1e-12);
  CHECK(check_no_signaling(pr_box()).passes);

  // Bob's outcome follows his own setting: allowed.
  const Behavior setting_correlated(binary_settings(), binary_settings(), {0.5, 0, 0.5, 0, 0, 0.5, 0, 0.5, 0.5, 0, 0.5, 0, 0, 0.5, 0, 0.5});
  // Alice's outcome follows Bob's setting.
  const Behavior flip(binary_settings(), binary_settings(),
                      {0, 0, 0.5, 0.5, 0.5, 0.5, 0, 0, 0, 0, 0.5, 0.5, 0.5, 0.5, 0, 0});
  const auto bad = check_no_signaling(flip);
  CHECK_FALSE(bad.passes);
  CHECK(bad.worst_deviation == 1.0);
  CHECK(bad.alice_deviation == 1.0);
  CHECK(check_no_signaling(setting_correlated).passes);  // marginals flat, only the correlation moves
}

TEST_CASE("marginal confusion identity") {
  const std::vector<double> priors[] = {{0.5, 0.5}, {0.9, 0.1}, {0.2, 0.8}};
  const Behavior singlet = singlet_behavior({Angle(0, 1), Angle(1, 2)}, {Angle(-3, 4), Angle(3, 4)});
  const Behavior flip(binary_settings(), binary_settings(),
                      {0, 0, 0.5, 0.5, 0.5, 0.5, 0, 0, 0, 0, 0.5, 0.5, 0.5, 0.5, 0, 0});
  for (const auto& p : priors) {
    for (std::size_t x = 0; x < 2; ++x) {
      CHECK(marginal_confusion_gap(singlet, x, p) < 1e-12);
      CHECK(marginal_confusion_gap(flip, x, p) > 0.05);
    }
  }
}

TEST_CASE("factorizability") {
  const Behavior singlet = singlet_behavior({Angle(0, 1), Angle(1, 2)}, {Angle(1, 4), Angle(-1, 4)});
  const auto q = check_factorizable(singlet);
  CHECK_FALSE(q.local);
  CHECK(std::abs(q.max_abs_s - 2 * kSqrt2) < 1e-12);
  const auto pr = check_factorizable(pr_box());
  CHECK_FALSE(pr.local);
  CHECK(pr.max_abs_s == 4.0);
  CHECK(check_factorizable(uniform_behavior(binary_settings(), binary_settings())).local);
  CHECK_THROWS_AS(check_factorizable(singlet_behavior({Angle(0, 1)}, {Angle(0, 1), Angle(1, 2)})), UnsupportedScenario);
}

TEST_CASE("property: random LHV models are local on every facet") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 1000; ++i) {
    const LhvModel m = random_lhv(rng);
    const Behavior b = lhv_behavior(m);
    const auto ns = check_no_signaling(b);
    CHECK(ns.passes);
    const auto f = check_factorizable(b);
    CHECK(f.local);
    for (double facet : f.facets) CHECK(std::abs(facet) <= 2.0 + 1e-9);
    // Independent facet oracle: all relabelings of the CHSH sum.
    for (int minus = 0; minus < 4; ++minus) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) {
        const double e = correlator(b, static_cast<std::size_t>(k / 2), static_cast<std::size_t>(k % 2));
        s += k == minus ? -e : e;
      }
      CHECK(std::abs(s) <= 2.0 + 1e-9);
    }
    for (std::size_t x = 0; x < 2; ++x) {
      for (std::size_t y = 0; y < 2; ++y) CHECK(std::abs(correlator(b, x, y)) <= 1.0 + 1e-15);
    }
  }
}

TEST_CASE("property: expectation form is S/4 on random behaviors") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const Behavior b = random_behavior(rng);
    CHECK(std::abs(4.0 * chsh_expectation(b, {}, {0.25, 0.25, 0.25, 0.25}) - chsh_value(b, {})) < 1e-12);
    CHECK(std::abs(chsh_value(b, {}) - s_by_hand(b)) < 1e-12);
  }
}

TEST_CASE("behavior table round trip") {
  const Behavior singlet = singlet_behavior({Angle(0, 1), Angle(1, 2)}, {Angle(-3, 4), Angle(3, 4)});
  const Behavior back = parse_behavior_table(format_behavior_table(singlet));
  REQUIRE(back.alice_settings() == singlet.alice_settings());
  REQUIRE(back.bob_settings() == singlet.bob_settings());
  for (std::size_t i = 0; i < singlet.table().size(); ++i) CHECK(back.table()[i] == singlet.table()[i]);

  const Behavior pr = parse_behavior_table(format_behavior_table(pr_box()));
  CHECK(pr.alice_settings() == binary_settings());
  CHECK(chsh_value(pr, {}) == 4.0);
  CHECK_THROWS_AS(parse_behavior_table("x,y,a,b,p\n0,0,1,1,1\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_behavior_table("x,y,a,b\n"), InvalidArgument);
}
