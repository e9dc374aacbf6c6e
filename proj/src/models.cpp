#include "bellsim/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bellsim/errors.hpp"
#include "bellsim/prob_kernel.hpp"

namespace bellsim {

namespace {

void check_slice(std::span<const double> s, const std::string& where) {
  double sum = 0.0;
  for (double v : s) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw InvalidArgument(where + ": entries must be finite and nonnegative");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance) {
    throw InvalidArgument(where + ": slice does not sum to 1");
  }
}

std::string pair_name(std::size_t x, std::size_t y) {
  return "(x=" + std::to_string(x) + ",y=" + std::to_string(y) + ")";
}

}  // namespace

std::vector<Setting> angle_settings(const std::vector<Angle>& angles) {
  std::vector<Setting> out;
  out.reserve(angles.size());
  for (const auto& a : angles) out.push_back(Setting::from_angle(a));
  return out;
}

std::vector<Setting> binary_settings() { return {Setting::abstract("0"), Setting::abstract("1")}; }

Behavior::Behavior(std::vector<Setting> alice, std::vector<Setting> bob, std::vector<double> table)
    : alice_(std::move(alice)), bob_(std::move(bob)), table_(std::move(table)) {
  if (alice_.empty() || bob_.empty()) throw InvalidArgument("behavior needs at least one setting per party");
  for (const auto* grid : {&alice_, &bob_}) {
    for (std::size_t i = 0; i < grid->size(); ++i) {
      for (std::size_t j = i + 1; j < grid->size(); ++j) {
        if ((*grid)[i].label == (*grid)[j].label) {
          throw InvalidArgument("duplicate setting label '" + (*grid)[i].label + "'");
        }
      }
    }
  }
  if (table_.size() != alice_.size() * bob_.size() * 4) {
    throw InvalidArgument("behavior table must hold 4 cells per setting pair");
  }
  for (std::size_t x = 0; x < alice_.size(); ++x) {
    for (std::size_t y = 0; y < bob_.size(); ++y) {
      check_slice(slice(x, y), "behavior slice " + pair_name(x, y));
    }
  }
}

std::span<const double, 4> Behavior::slice(std::size_t x, std::size_t y) const {
  if (x >= alice_.size() || y >= bob_.size()) {
    throw InvalidArgument("setting pair " + pair_name(x, y) + " is outside the grid");
  }
  return std::span<const double, 4>(table_.data() + (x * bob_.size() + y) * 4, 4);
}

double Behavior::p(std::size_t x, std::size_t y, Outcome a, Outcome b) const {
  return slice(x, y)[cell_index(a, b)];
}

void LhvModel::validate() const {
  if (prior.empty()) throw InvalidArgument("LHV model needs at least one lambda");
  check_slice(prior, "LHV prior");
  if (alice_settings == 0 || bob_settings == 0) throw InvalidArgument("LHV model needs settings");
  if (alice_response.size() != prior.size() * alice_settings ||
      bob_response.size() != prior.size() * bob_settings) {
    throw InvalidArgument("LHV response tables do not match lambda count and settings");
  }
  for (const auto& r : alice_response) check_slice(r, "LHV response p(a|x,lambda)");
  for (const auto& r : bob_response) check_slice(r, "LHV response p(b|y,lambda)");
}

std::vector<LhvModel> deterministic_strategies() {
  std::vector<LhvModel> out;
  auto response = [](int bit) {
    return bit == 0 ? std::array<double, 2>{1.0, 0.0} : std::array<double, 2>{0.0, 1.0};
  };
  for (int code = 0; code < 16; ++code) {
    LhvModel m;
    m.prior = {1.0};
    m.alice_response = {response(code & 1), response((code >> 1) & 1)};
    m.bob_response = {response((code >> 2) & 1), response((code >> 3) & 1)};
    out.push_back(std::move(m));
  }
  return out;
}

Behavior singlet_behavior(const std::vector<Angle>& alice, const std::vector<Angle>& bob) {
  std::vector<double> table;
  table.reserve(alice.size() * bob.size() * 4);
  for (const auto& ta : alice) {
    for (const auto& tb : bob) {
      const double c = (ta - tb).cos();
      for (std::size_t cell = 0; cell < 4; ++cell) {
        // delta(a,-b) - delta(a,b): +1 for anti-aligned outcomes, -1 for aligned.
        const double sign = cell_a(cell) == cell_b(cell) ? -1.0 : 1.0;
        table.push_back(std::max(0.0, 0.25 + sign * c / 4.0));
      }
    }
  }
  return Behavior(angle_settings(alice), angle_settings(bob), std::move(table));
}

Behavior pr_box() {
  std::vector<double> table;
  for (std::size_t x = 0; x < 2; ++x) {
    for (std::size_t y = 0; y < 2; ++y) {
      for (std::size_t cell = 0; cell < 4; ++cell) {
        const std::size_t parity = static_cast<std::size_t>(cell_a(cell)) ^ static_cast<std::size_t>(cell_b(cell));
        table.push_back(parity == (x & y) ? 0.5 : 0.0);
      }
    }
  }
  return Behavior(binary_settings(), binary_settings(), std::move(table));
}

Behavior lhv_behavior(const LhvModel& m) {
  m.validate();
  std::vector<double> table(m.alice_settings * m.bob_settings * 4, 0.0);
  for (std::size_t x = 0; x < m.alice_settings; ++x) {
    for (std::size_t y = 0; y < m.bob_settings; ++y) {
      for (std::size_t cell = 0; cell < 4; ++cell) {
        double s = 0.0;
        for (std::size_t l = 0; l < m.prior.size(); ++l) {
          s += m.prior[l] * m.alice_response[l * m.alice_settings + x][static_cast<std::size_t>(cell_a(cell))] *
               m.bob_response[l * m.bob_settings + y][static_cast<std::size_t>(cell_b(cell))];
        }
        table[(x * m.bob_settings + y) * 4 + cell] = s;
      }
    }
  }
  // Renormalize away rounding so the slice check holds for any valid model.
  for (std::size_t k = 0; k < table.size(); k += 4) {
    const double sum = table[k] + table[k + 1] + table[k + 2] + table[k + 3];
    for (std::size_t c = 0; c < 4; ++c) table[k + c] /= sum;
  }
  std::vector<Setting> alice;
  std::vector<Setting> bob;
  for (std::size_t x = 0; x < m.alice_settings; ++x) alice.push_back(Setting::abstract(std::to_string(x)));
  for (std::size_t y = 0; y < m.bob_settings; ++y) bob.push_back(Setting::abstract(std::to_string(y)));
  return Behavior(std::move(alice), std::move(bob), std::move(table));
}

Behavior uniform_behavior(std::vector<Setting> alice, std::vector<Setting> bob) {
  std::vector<double> table(alice.size() * bob.size() * 4, 0.25);
  return Behavior(std::move(alice), std::move(bob), std::move(table));
}

double correlator(const Behavior& b, std::size_t x, std::size_t y) {
  const auto s = b.slice(x, y);
  double e = 0.0;
  for (std::size_t cell = 0; cell < 4; ++cell) e += sign_of(cell_a(cell)) * sign_of(cell_b(cell)) * s[cell];
  return e;
}

double chsh_value(const Behavior& b, const ChshSettings& s) {
  double total = 0.0;
  const auto pairs = s.pairs();
  for (std::size_t k = 0; k < 4; ++k) {
    total += ChshSettings::signs()[k] * correlator(b, pairs[k][0], pairs[k][1]);
  }
  return total;
}

double chsh_expectation(const Behavior& b, const ChshSettings& s, const std::array<double, 4>& prior) {
  check_slice(prior, "CHSH setting prior");
  const auto pairs = s.pairs();
  double total = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto slice = b.slice(pairs[k][0], pairs[k][1]);
    for (std::size_t cell = 0; cell < 4; ++cell) {
      total += sign_of(cell_a(cell)) * sign_of(cell_b(cell)) * ChshSettings::signs()[k] * slice[cell] * prior[k];
    }
  }
  return total;
}

NoSignalingReport check_no_signaling(const Behavior& b, double tol) {
  NoSignalingReport r;
  const std::size_t nx = b.alice_count();
  const std::size_t ny = b.bob_count();
  r.alice_plus.resize(nx * ny);
  r.bob_plus.resize(nx * ny);
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y) {
      const auto s = b.slice(x, y);
      r.alice_plus[x * ny + y] = s[cell_index(Outcome::plus, Outcome::plus)] + s[cell_index(Outcome::plus, Outcome::minus)];
      r.bob_plus[x * ny + y] = s[cell_index(Outcome::plus, Outcome::plus)] + s[cell_index(Outcome::minus, Outcome::plus)];
    }
  }
  // Binary outcomes: the deviation of p(-|...) equals that of p(+|...).
  for (std::size_t x = 0; x < nx; ++x) {
    const auto row = std::span<const double>(r.alice_plus).subspan(x * ny, ny);
    const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    r.alice_deviation = std::max(r.alice_deviation, *hi - *lo);
  }
  for (std::size_t y = 0; y < ny; ++y) {
    double lo = 1.0;
    double hi = 0.0;
    for (std::size_t x = 0; x < nx; ++x) {
      lo = std::min(lo, r.bob_plus[x * ny + y]);
      hi = std::max(hi, r.bob_plus[x * ny + y]);
    }
    r.bob_deviation = std::max(r.bob_deviation, hi - lo);
  }
  r.worst_deviation = std::max(r.alice_deviation, r.bob_deviation);
  r.passes = r.worst_deviation <= tol;
  r.marginal_setting_independence = r.passes;
  return r;
}

double marginal_confusion_gap(const Behavior& b, std::size_t x, std::span<const double> bob_prior) {
  if (bob_prior.size() != b.bob_count()) throw InvalidArgument("setting prior size does not match Bob's grid");
  check_slice(bob_prior, "setting prior");
  double gap = 0.0;
  for (Outcome a : {Outcome::plus, Outcome::minus}) {
    double averaged = 0.0;
    for (std::size_t y = 0; y < b.bob_count(); ++y) {
      averaged += (b.p(x, y, a, Outcome::plus) + b.p(x, y, a, Outcome::minus)) * bob_prior[y];
    }
    for (std::size_t y = 0; y < b.bob_count(); ++y) {
      const double cond = b.p(x, y, a, Outcome::plus) + b.p(x, y, a, Outcome::minus);
      gap = std::max(gap, std::abs(averaged - cond));
    }
  }
  return gap;
}

FactorizabilityReport check_factorizable(const Behavior& b, double no_signaling_tol, double facet_tol) {
  if (b.alice_count() != 2 || b.bob_count() != 2) {
    std::ostringstream os;
    os << "local-polytope test supports only 2 settings per party, got " << b.alice_count() << "x"
       << b.bob_count();
    throw UnsupportedScenario(os.str());
  }
  FactorizabilityReport r;
  r.no_signaling = check_no_signaling(b, no_signaling_tol).passes;
  const double e00 = correlator(b, 0, 0);
  const double e01 = correlator(b, 0, 1);
  const double e10 = correlator(b, 1, 0);
  const double e11 = correlator(b, 1, 1);
  const double total = e00 + e01 + e10 + e11;
  r.facets = {total - 2 * e00, total - 2 * e01, total - 2 * e10, total - 2 * e11};
  for (double f : r.facets) r.max_abs_s = std::max(r.max_abs_s, std::abs(f));
  r.local = r.no_signaling && r.max_abs_s <= 2.0 + facet_tol;
  return r;
}

}  // namespace bellsim
