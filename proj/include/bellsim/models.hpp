#pragma once

// Correlation sources p(a,b|x,y) for two parties with binary outcomes, and
// the CHSH / no-signaling / local-polytope checks that act on them.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bellsim/angle.hpp"

namespace bellsim {

enum class Outcome : std::uint8_t { plus = 0, minus = 1 };

/// +1 or -1.
inline int sign_of(Outcome o) { return o == Outcome::plus ? 1 : -1; }

/// Cells of a slice are ordered (+,+), (+,-), (-,+), (-,-).
inline constexpr std::size_t cell_index(Outcome a, Outcome b) {
  return static_cast<std::size_t>(a) * 2 + static_cast<std::size_t>(b);
}
inline constexpr Outcome cell_a(std::size_t cell) { return static_cast<Outcome>(cell / 2); }
inline constexpr Outcome cell_b(std::size_t cell) { return static_cast<Outcome>(cell % 2); }

/// A measurement setting: an abstract label, optionally an exact angle.
struct Setting {
  std::string label;
  std::optional<Angle> angle;

  static Setting from_angle(Angle a) { return {a.label(), a}; }
  static Setting abstract(std::string label) { return {std::move(label), std::nullopt}; }
  friend bool operator==(const Setting&, const Setting&) = default;
};

std::vector<Setting> angle_settings(const std::vector<Angle>& angles);
std::vector<Setting> binary_settings();

/// p(a,b|x,y) on a finite setting grid. Each (x,y) slice holds four cells.
class Behavior {
 public:
  /// Validates that every slice is a distribution within 1e-12.
  Behavior(std::vector<Setting> alice, std::vector<Setting> bob, std::vector<double> table);

  const std::vector<Setting>& alice_settings() const { return alice_; }
  const std::vector<Setting>& bob_settings() const { return bob_; }
  std::size_t alice_count() const { return alice_.size(); }
  std::size_t bob_count() const { return bob_.size(); }
  std::span<const double> table() const { return table_; }

  /// Throws InvalidArgument when (x,y) is outside the grid.
  std::span<const double, 4> slice(std::size_t x, std::size_t y) const;
  double p(std::size_t x, std::size_t y, Outcome a, Outcome b) const;

 private:
  std::vector<Setting> alice_;
  std::vector<Setting> bob_;
  std::vector<double> table_;
};

/// Discrete hidden-variable model with factorized responses.
struct LhvModel {
  std::vector<double> prior;                      // p(lambda)
  std::size_t alice_settings = 2;
  std::size_t bob_settings = 2;
  std::vector<std::array<double, 2>> alice_response;  // [lambda * alice_settings + x] -> p(a|x,lambda)
  std::vector<std::array<double, 2>> bob_response;    // [lambda * bob_settings + y] -> p(b|y,lambda)

  /// Throws InvalidArgument on size mismatches or non-normalized slices.
  void validate() const;
};

/// The 16 deterministic local strategies (a0,a1,b0,b1) of the 2-2-2 scenario,
/// each as a single-lambda model.
std::vector<LhvModel> deterministic_strategies();

/// CHSH term pairs (x0,y0), (x1,y0), (x0,y1), (x1,y1) with signs (+,+,+,-).
struct ChshSettings {
  std::size_t x0 = 0;
  std::size_t x1 = 1;
  std::size_t y0 = 0;
  std::size_t y1 = 1;

  std::array<std::array<std::size_t, 2>, 4> pairs() const {
    return {{{x0, y0}, {x1, y0}, {x0, y1}, {x1, y1}}};
  }
  static constexpr std::array<int, 4> signs() { return {1, 1, 1, -1}; }
  friend bool operator==(const ChshSettings&, const ChshSettings&) = default;
};

Behavior singlet_behavior(const std::vector<Angle>& alice, const std::vector<Angle>& bob);
Behavior pr_box();
Behavior lhv_behavior(const LhvModel& m);
Behavior uniform_behavior(std::vector<Setting> alice, std::vector<Setting> bob);

double correlator(const Behavior& b, std::size_t x, std::size_t y);
double chsh_value(const Behavior& b, const ChshSettings& s);

/// Sum of sign * prior * <ab> over the four CHSH pairs; prior is ordered as
/// ChshSettings::pairs(). Uniform prior gives S/4.
double chsh_expectation(const Behavior& b, const ChshSettings& s, const std::array<double, 4>& prior);

struct NoSignalingReport {
  bool passes = false;
  double worst_deviation = 0.0;
  double alice_deviation = 0.0;
  double bob_deviation = 0.0;
  /// Same as `passes`: each marginal does not move with the distant setting.
  bool marginal_setting_independence = false;
  /// p(a=+|x,y), indexed [x * bob_count + y].
  std::vector<double> alice_plus;
  /// p(b=+|x,y), indexed [x * bob_count + y].
  std::vector<double> bob_plus;
};

NoSignalingReport check_no_signaling(const Behavior& b, double tol = 1e-12);

/// max over a,y of |sum_y' p(a|x,y') p(y') - p(a|x,y)|: zero iff Alice's
/// marginal at setting x does not depend on y (for a prior with full support).
double marginal_confusion_gap(const Behavior& b, std::size_t x, std::span<const double> bob_prior);

struct FactorizabilityReport {
  bool local = false;
  bool no_signaling = false;
  double max_abs_s = 0.0;
  /// E00+E01+E10+E11-2*E_xy for the minus sign at (x,y), ordered 00,01,10,11.
  /// Each facet bounds both signs, giving the 8 CHSH inequalities.
  std::array<double, 4> facets{};
};

/// Exact local-polytope membership for the 2-2-2 scenario: no-signaling plus
/// all eight CHSH facets. Throws UnsupportedScenario for other grids.
FactorizabilityReport check_factorizable(const Behavior& b, double no_signaling_tol = 1e-12,
                                         double facet_tol = 1e-9);

}  // namespace bellsim
