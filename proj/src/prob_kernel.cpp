#include "bellsim/prob_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "bellsim/errors.hpp"

namespace bellsim {

namespace detail {

struct JointAccess {
  static TaggedJoint make(std::string observer, std::vector<Variable> free,
                          std::vector<Conditioner> conditioners, std::vector<double> p) {
    return TaggedJoint(TaggedJoint::Unchecked{}, std::move(observer), std::move(free),
                       std::move(conditioners), std::move(p));
  }
  static ConditionalTable make_conditional(std::string observer, std::vector<Variable> free,
                                           std::vector<Variable> given,
                                           std::vector<Conditioner> context, std::vector<double> v) {
    return ConditionalTable(ConditionalTable::Unchecked{}, std::move(observer), std::move(free),
                            std::move(given), std::move(context), std::move(v));
  }
};

}  // namespace detail

namespace {

using detail::JointAccess;

std::size_t cell_count(std::span<const Variable> vars) {
  std::size_t n = 1;
  for (const auto& v : vars) n *= v.size();
  return n;
}

std::vector<std::size_t> strides_of(std::span<const Variable> vars) {
  std::vector<std::size_t> s(vars.size(), 1);
  for (std::size_t k = vars.size(); k-- > 1;) s[k - 1] = s[k] * vars[k].size();
  return s;
}

void check_names(std::span<const Variable> free, std::span<const Conditioner> conditioners) {
  // Tables hold a handful of variables; a linear scan beats hashing here.
  std::vector<std::string_view> seen;
  seen.reserve(free.size() + conditioners.size());
  auto fresh = [&](std::string_view name) {
    if (std::find(seen.begin(), seen.end(), name) != seen.end()) return false;
    seen.push_back(name);
    return true;
  };
  for (const auto& v : free) {
    if (!fresh(v.name())) {
      throw InvalidArgument("variable '" + v.name() + "' listed twice");
    }
  }
  for (const auto& c : conditioners) {
    if (!fresh(c.name())) {
      throw InvalidArgument("variable '" + c.name() + "' is both free and conditioned, or conditioned twice");
    }
    if (c.value >= c.variable.size()) {
      throw InvalidArgument("conditioner value out of domain for '" + c.name() + "'");
    }
  }
}

void check_distribution(std::span<const double> p, const char* what) {
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw InvalidArgument(std::string(what) + ": entries must be finite and nonnegative");
    }
    sum += x;
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << what << ": entries sum to " << sum << ", expected 1";
    throw InvalidArgument(os.str());
  }
}

std::vector<Conditioner> merge_conditioners(std::span<const Conditioner> first,
                                            std::span<const Conditioner> second) {
  std::vector<Conditioner> out(first.begin(), first.end());
  for (const auto& c : second) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const Conditioner& o) { return o.name() == c.name(); });
    if (it == out.end()) {
      out.push_back(c);
    } else if (!(*it == c)) {
      throw InvalidArgument("conflicting conditioners on '" + c.name() + "'");
    }
  }
  return out;
}

std::vector<std::string> names_of(std::span<const Variable> vars) {
  std::vector<std::string> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(v.name());
  return out;
}

bool same_name_set(std::span<const Variable> a, std::span<const Variable> b) {
  if (a.size() != b.size()) return false;
  for (const auto& v : a) {
    auto it = std::find_if(b.begin(), b.end(), [&](const Variable& w) { return w.name() == v.name(); });
    if (it == b.end() || !(*it == v)) return false;
  }
  return true;
}

}  // namespace

std::string_view to_string(Modality m) {
  return m == Modality::factual ? "factual" : "counterfactual";
}

// ---------------------------------------------------------------------------
// Variable

Variable::Variable(std::string name, std::vector<std::string> domain) : name_(std::move(name)) {
  if (name_.empty()) throw InvalidArgument("variable name must be non-empty");
  if (domain.empty()) throw InvalidArgument("variable '" + name_ + "' has an empty domain");
  std::unordered_set<std::string_view> seen;
  for (const auto& v : domain) {
    if (!seen.insert(v).second) {
      throw InvalidArgument("variable '" + name_ + "' repeats domain value '" + v + "'");
    }
  }
  domain_ = std::make_shared<const std::vector<std::string>>(std::move(domain));
}

const std::string& Variable::label(std::size_t index) const {
  if (index >= domain_->size()) throw InvalidArgument("index out of domain for '" + name_ + "'");
  return (*domain_)[index];
}

std::size_t Variable::index_of(std::string_view label) const {
  auto it = std::find(domain_->begin(), domain_->end(), label);
  if (it == domain_->end()) {
    throw InvalidArgument("'" + std::string(label) + "' is not in the domain of '" + name_ + "'");
  }
  return static_cast<std::size_t>(it - domain_->begin());
}

// ---------------------------------------------------------------------------
// TaggedJoint

TaggedJoint::TaggedJoint(std::string observer, std::vector<Variable> free,
                         std::vector<Conditioner> conditioners, std::vector<double> probabilities)
    : observer_(std::move(observer)),
      free_(std::move(free)),
      conditioners_(std::move(conditioners)),
      probabilities_(std::move(probabilities)) {
  check_names(free_, conditioners_);
  if (probabilities_.size() != cell_count(free_)) {
    throw InvalidArgument("probability table size does not match the free variables");
  }
  check_distribution(probabilities_, "joint");
}

TaggedJoint::TaggedJoint(Unchecked, std::string observer, std::vector<Variable> free,
                         std::vector<Conditioner> conditioners, std::vector<double> probabilities)
    : observer_(std::move(observer)),
      free_(std::move(free)),
      conditioners_(std::move(conditioners)),
      probabilities_(std::move(probabilities)) {}

TaggedJoint TaggedJoint::uniform(std::string observer, std::vector<Variable> free,
                                 std::vector<Conditioner> conditioners) {
  const std::size_t n = cell_count(free);
  return TaggedJoint(std::move(observer), std::move(free), std::move(conditioners),
                     std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

TaggedJoint TaggedJoint::point_mass(std::string observer, std::vector<Variable> free,
                                    const Assignment& at, std::vector<Conditioner> conditioners) {
  std::vector<double> p(cell_count(free), 0.0);
  TaggedJoint shell(Unchecked{}, observer, free, {}, {});
  p[shell.flat_index(at)] = 1.0;
  return TaggedJoint(std::move(observer), std::move(free), std::move(conditioners), std::move(p));
}

std::optional<std::size_t> TaggedJoint::free_position(std::string_view name) const {
  for (std::size_t k = 0; k < free_.size(); ++k) {
    if (free_[k].name() == name) return k;
  }
  return std::nullopt;
}

const Conditioner* TaggedJoint::conditioner(std::string_view name) const {
  for (const auto& c : conditioners_) {
    if (c.name() == name) return &c;
  }
  return nullptr;
}

std::vector<std::string> TaggedJoint::free_names() const { return names_of(free_); }

std::size_t TaggedJoint::flat_index(std::span<const std::size_t> assignment) const {
  if (assignment.size() != free_.size()) {
    throw InvalidArgument("assignment length does not match the free variables");
  }
  std::size_t flat = 0;
  for (std::size_t k = 0; k < free_.size(); ++k) {
    if (assignment[k] >= free_[k].size()) {
      throw InvalidArgument("assignment out of domain for '" + free_[k].name() + "'");
    }
    flat = flat * free_[k].size() + assignment[k];
  }
  return flat;
}

double TaggedJoint::at(std::span<const std::size_t> assignment) const {
  return probabilities_[flat_index(assignment)];
}

Assignment TaggedJoint::assignment_of(std::size_t flat) const {
  Assignment a(free_.size());
  for (std::size_t k = free_.size(); k-- > 0;) {
    a[k] = flat % free_[k].size();
    flat /= free_[k].size();
  }
  return a;
}

TaggedJoint TaggedJoint::with_observer(std::string observer) const {
  TaggedJoint copy = *this;
  copy.observer_ = std::move(observer);
  return copy;
}

TaggedJoint TaggedJoint::with_conditioners(std::vector<Conditioner> conditioners) const {
  check_names(free_, conditioners);
  TaggedJoint copy = *this;
  copy.conditioners_ = std::move(conditioners);
  return copy;
}

// ---------------------------------------------------------------------------
// ConditionalTable

ConditionalTable::ConditionalTable(std::string observer, std::vector<Variable> free,
                                   std::vector<Variable> given, std::vector<Conditioner> context,
                                   std::vector<double> values)
    : observer_(std::move(observer)),
      free_(std::move(free)),
      given_(std::move(given)),
      context_(std::move(context)),
      values_(std::move(values)) {
  std::vector<Variable> all = free_;
  all.insert(all.end(), given_.begin(), given_.end());
  check_names(all, context_);
  if (values_.size() != free_cells() * given_cells()) {
    throw InvalidArgument("conditional table size does not match its variables");
  }
  const std::size_t f = free_cells();
  for (std::size_t g = 0; g < given_cells(); ++g) {
    check_distribution(std::span<const double>(values_).subspan(g * f, f), "conditional slice");
  }
}

ConditionalTable::ConditionalTable(Unchecked, std::string observer, std::vector<Variable> free,
                                   std::vector<Variable> given, std::vector<Conditioner> context,
                                   std::vector<double> values)
    : observer_(std::move(observer)),
      free_(std::move(free)),
      given_(std::move(given)),
      context_(std::move(context)),
      values_(std::move(values)) {}

std::size_t ConditionalTable::free_cells() const { return cell_count(free_); }
std::size_t ConditionalTable::given_cells() const { return cell_count(given_); }

double ConditionalTable::at(std::size_t given_flat, std::size_t free_flat) const {
  return values_[given_flat * free_cells() + free_flat];
}

// ---------------------------------------------------------------------------
// Operations

TaggedJoint condition(const TaggedJoint& d, std::string_view name, std::size_t value, Modality m) {
  const auto pos = d.free_position(name);
  if (!pos) throw InvalidArgument("cannot condition on '" + std::string(name) + "': not free");
  const Variable& var = d.free()[*pos];
  if (value >= var.size()) throw InvalidArgument("value out of domain for '" + var.name() + "'");

  const std::size_t stride = strides_of(d.free())[*pos];
  const std::size_t block = stride * var.size();
  const std::size_t outer = d.size() / block;
  const auto p = d.probabilities();

  double mass = 0.0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < stride; ++i) mass += p[o * block + value * stride + i];
  }
  if (!(mass > kProbabilityTolerance)) {
    throw ImpossibleEvidence("P(" + var.name() + "=" + var.label(value) + ") = 0 under " + render(d));
  }

  std::vector<double> out(outer * stride);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < stride; ++i) {
      out[o * stride + i] = p[o * block + value * stride + i] / mass;
    }
  }

  std::vector<Variable> free;
  free.reserve(d.free().size() - 1);
  for (std::size_t k = 0; k < d.free().size(); ++k) {
    if (k != *pos) free.push_back(d.free()[k]);
  }
  std::vector<Conditioner> conds;
  conds.reserve(d.conditioners().size() + 1);
  conds.push_back(Conditioner{var, value, m});
  conds.insert(conds.end(), d.conditioners().begin(), d.conditioners().end());
  return JointAccess::make(d.observer(), std::move(free), std::move(conds), std::move(out));
}

TaggedJoint marginalize(const TaggedJoint& d, std::string_view name) {
  const auto pos = d.free_position(name);
  if (!pos) throw InvalidArgument("cannot marginalize '" + std::string(name) + "': not free");
  const Variable& var = d.free()[*pos];
  const std::size_t stride = strides_of(d.free())[*pos];
  const std::size_t block = stride * var.size();
  const std::size_t outer = d.size() / block;
  const auto p = d.probabilities();

  std::vector<double> out(outer * stride, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < stride; ++i) {
      double s = 0.0;
      for (std::size_t v = 0; v < var.size(); ++v) s += p[o * block + v * stride + i];
      out[o * stride + i] = s;
    }
  }
  std::vector<Variable> free;
  for (std::size_t k = 0; k < d.free().size(); ++k) {
    if (k != *pos) free.push_back(d.free()[k]);
  }
  return JointAccess::make(d.observer(), std::move(free),
                           {d.conditioners().begin(), d.conditioners().end()}, std::move(out));
}

TaggedJoint reorder(const TaggedJoint& d, const std::vector<std::string>& order) {
  const auto free = d.free();
  if (order.size() != free.size()) {
    throw InvalidArgument("reorder: order must list every free variable exactly once");
  }
  std::vector<std::size_t> perm(order.size());
  std::vector<bool> used(order.size(), false);
  for (std::size_t j = 0; j < order.size(); ++j) {
    const auto pos = d.free_position(order[j]);
    if (!pos || used[*pos]) {
      throw InvalidArgument("reorder: '" + order[j] + "' is not a free variable or is repeated");
    }
    used[*pos] = true;
    perm[j] = *pos;
  }
  bool identity = true;
  for (std::size_t j = 0; j < perm.size(); ++j) identity = identity && perm[j] == j;
  if (identity) return d;

  const auto in_strides = strides_of(free);
  std::vector<Variable> out_vars;
  out_vars.reserve(perm.size());
  for (std::size_t j : perm) out_vars.push_back(free[j]);

  std::vector<double> out(d.size());
  std::vector<std::size_t> digits(perm.size(), 0);
  const auto p = d.probabilities();
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t j = 0; j < perm.size(); ++j) src += digits[j] * in_strides[perm[j]];
    out[flat] = p[src];
    for (std::size_t j = perm.size(); j-- > 0;) {
      if (++digits[j] < out_vars[j].size()) break;
      digits[j] = 0;
    }
  }
  return JointAccess::make(d.observer(), std::move(out_vars),
                           {d.conditioners().begin(), d.conditioners().end()}, std::move(out));
}

TaggedJoint marginal_over(const TaggedJoint& d, const std::vector<std::string>& keep) {
  TaggedJoint out = d;
  for (const auto& v : d.free()) {
    if (std::find(keep.begin(), keep.end(), v.name()) == keep.end()) out = marginalize(out, v.name());
  }
  return reorder(out, keep);
}

ConditionalTable conditional_table(const TaggedJoint& d, const std::vector<std::string>& given) {
  std::vector<std::string> order = given;
  for (const auto& v : d.free()) {
    if (std::find(given.begin(), given.end(), v.name()) == given.end()) order.push_back(v.name());
  }
  const TaggedJoint r = reorder(d, order);
  const auto vars = r.free();
  std::vector<Variable> given_vars(vars.begin(), vars.begin() + static_cast<std::ptrdiff_t>(given.size()));
  std::vector<Variable> free_vars(vars.begin() + static_cast<std::ptrdiff_t>(given.size()), vars.end());

  const std::size_t g_cells = cell_count(given_vars);
  const std::size_t f_cells = cell_count(free_vars);
  const auto p = r.probabilities();
  std::vector<double> values(p.begin(), p.end());
  for (std::size_t g = 0; g < g_cells; ++g) {
    double mass = 0.0;
    for (std::size_t f = 0; f < f_cells; ++f) mass += values[g * f_cells + f];
    for (std::size_t f = 0; f < f_cells; ++f) {
      values[g * f_cells + f] = mass > 0.0 ? values[g * f_cells + f] / mass
                                           : 1.0 / static_cast<double>(f_cells);
    }
  }
  return JointAccess::make_conditional(d.observer(), std::move(free_vars), std::move(given_vars),
                                       {d.conditioners().begin(), d.conditioners().end()},
                                       std::move(values));
}

TaggedJoint product(const ConditionalTable& conditional, const TaggedJoint& marginal) {
  if (!same_name_set(conditional.given(), marginal.free())) {
    throw InvalidArgument("product: conditional's given variables must equal the marginal's free variables");
  }
  const TaggedJoint m = reorder(marginal, names_of(conditional.given()));
  const std::size_t f_cells = conditional.free_cells();
  const std::size_t g_cells = conditional.given_cells();

  std::vector<Variable> vars(conditional.free().begin(), conditional.free().end());
  vars.insert(vars.end(), conditional.given().begin(), conditional.given().end());
  std::vector<double> out(f_cells * g_cells);
  const auto mp = m.probabilities();
  for (std::size_t f = 0; f < f_cells; ++f) {
    for (std::size_t g = 0; g < g_cells; ++g) out[f * g_cells + g] = conditional.at(g, f) * mp[g];
  }
  auto conds = merge_conditioners(conditional.context(), marginal.conditioners());
  check_names(vars, conds);
  const std::string& obs = marginal.observer().empty() ? conditional.observer() : marginal.observer();
  TaggedJoint joint = JointAccess::make(obs, std::move(vars), std::move(conds), std::move(out));

  std::vector<std::string> order = names_of(conditional.free());
  for (const auto& v : marginal.free()) order.push_back(v.name());
  return reorder(joint, order);
}

TaggedJoint bayes_invert(const TaggedJoint& prior, const ConditionalTable& likelihood,
                         std::span<const std::size_t> observed, Modality m) {
  if (!same_name_set(likelihood.given(), prior.free())) {
    throw InvalidArgument("bayes_invert: likelihood must be conditioned on exactly the prior's variables");
  }
  if (observed.size() != likelihood.free().size()) {
    throw InvalidArgument("bayes_invert: observed assignment length mismatch");
  }
  std::size_t e = 0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    if (observed[k] >= likelihood.free()[k].size()) {
      throw InvalidArgument("bayes_invert: observed value out of domain");
    }
    e = e * likelihood.free()[k].size() + observed[k];
  }

  const TaggedJoint r = reorder(prior, names_of(likelihood.given()));
  const auto p = r.probabilities();
  std::vector<double> post(p.size());
  double evidence = 0.0;
  for (std::size_t h = 0; h < p.size(); ++h) {
    post[h] = likelihood.at(h, e) * p[h];
    evidence += post[h];
  }
  if (!(evidence > kProbabilityTolerance)) {
    throw ImpossibleEvidence("bayes_invert: observed assignment has zero probability");
  }
  for (double& x : post) x /= evidence;

  std::vector<Conditioner> conds;
  for (std::size_t k = observed.size(); k-- > 0;) {
    conds.insert(conds.begin(), Conditioner{likelihood.free()[k], observed[k], m});
  }
  conds = merge_conditioners(conds, prior.conditioners());
  conds = merge_conditioners(conds, likelihood.context());
  TaggedJoint out = JointAccess::make(prior.observer(), {r.free().begin(), r.free().end()},
                                      std::move(conds), std::move(post));
  return reorder(out, prior.free_names());
}

Assignment argmax(const TaggedJoint& d) {
  const auto p = d.probabilities();
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return d.assignment_of(best);
}

double max_abs_difference(const TaggedJoint& a, const TaggedJoint& b) {
  if (!same_name_set(a.free(), b.free())) {
    throw InvalidArgument("tables have different free variables");
  }
  const TaggedJoint bb = reorder(b, a.free_names());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.probabilities()[i] - bb.probabilities()[i]));
  }
  return worst;
}

bool approx_equal(const TaggedJoint& a, const TaggedJoint& b, double tol) {
  if (!same_name_set(a.free(), b.free())) return false;
  if (a.conditioners().size() != b.conditioners().size()) return false;
  for (const auto& c : a.conditioners()) {
    const Conditioner* other = b.conditioner(c.name());
    if (other == nullptr || !(*other == c)) return false;
  }
  return max_abs_difference(a, b) <= tol;
}

std::string render(const TaggedJoint& d) {
  auto join = [](std::string& out, const std::vector<std::string>& parts) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i > 0) out += ',';
      out += parts[i];
    }
  };
  std::vector<std::string> counterfactual;
  std::vector<std::string> factual;
  for (const auto& c : d.conditioners()) {
    (c.modality == Modality::counterfactual ? counterfactual : factual).push_back(c.name());
  }
  std::string out = "P";
  if (!d.observer().empty()) out += "_" + d.observer();
  out += '(';
  join(out, d.free_names());
  if (!counterfactual.empty()) {
    out += '|';
    join(out, counterfactual);
    out += '|';
    join(out, factual);
  } else if (!factual.empty()) {
    out += "‖";
    join(out, factual);
  }
  out += ')';
  return out;
}

// ---------------------------------------------------------------------------
// Factorizations

std::string Factorization::describe() const {
  std::string out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    out += "p(";
    for (std::size_t j = 0; j < blocks[i].size(); ++j) {
      if (j > 0) out += ',';
      out += blocks[i][j];
    }
    bool first = true;
    for (std::size_t k = i + 1; k < blocks.size(); ++k) {
      for (const auto& name : blocks[k]) {
        out += first ? '|' : ',';
        out += name;
        first = false;
      }
    }
    out += ')';
  }
  return out;
}

namespace {

void ordered_partitions(const std::vector<std::string>& names, std::uint32_t remaining,
                        std::vector<std::vector<std::string>>& current,
                        std::vector<Factorization>& out) {
  if (remaining == 0) {
    out.push_back(Factorization{current});
    return;
  }
  // Every nonempty subset of `remaining`, in increasing bitmask order.
  for (std::uint32_t sub = 1; sub <= remaining; ++sub) {
    if ((sub & ~remaining) != 0) continue;
    std::vector<std::string> block;
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (sub & (1u << k)) block.push_back(names[k]);
    }
    current.push_back(std::move(block));
    ordered_partitions(names, remaining & ~sub, current, out);
    current.pop_back();
  }
}

}  // namespace

std::vector<Factorization> enumerate_factorizations(const TaggedJoint& d, FactorizationScope scope) {
  const auto names = d.free_names();
  if (names.empty()) throw InvalidArgument("enumerate_factorizations needs at least one free variable");
  if (names.size() > 16) throw InvalidArgument("enumerate_factorizations: too many variables");

  std::vector<Factorization> out;
  if (scope == FactorizationScope::chain) {
    std::vector<std::size_t> idx(names.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    do {
      Factorization f;
      for (std::size_t i : idx) f.blocks.push_back({names[i]});
      out.push_back(std::move(f));
    } while (std::next_permutation(idx.begin(), idx.end()));
    return out;
  }
  std::vector<std::vector<std::string>> current;
  ordered_partitions(names, (1u << names.size()) - 1u, current, out);
  return out;
}

TaggedJoint remultiply(const TaggedJoint& d, const Factorization& f) {
  if (f.blocks.empty()) throw InvalidArgument("empty factorization");
  std::vector<std::string> tail = f.blocks.back();
  TaggedJoint acc = marginal_over(d, tail);
  for (std::size_t i = f.blocks.size() - 1; i-- > 0;) {
    std::vector<std::string> scope = f.blocks[i];
    scope.insert(scope.end(), tail.begin(), tail.end());
    const ConditionalTable factor = conditional_table(marginal_over(d, scope), tail);
    acc = product(factor, acc);
    tail = std::move(scope);
  }
  return reorder(acc, d.free_names());
}

}  // namespace bellsim
