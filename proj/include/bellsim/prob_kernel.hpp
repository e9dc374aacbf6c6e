#pragma once

// Finite discrete probability tables with modality-tagged conditioning.
//
// A TaggedJoint is a normalized table over its free variables, read as
// P_<observer>(free | counterfactual conditioners | factual conditioners).
// Conditioning moves a free variable into the conditioner list and records
// whether the assignment is locally known (factual) or merely posited
// (counterfactual). The tag never changes the numbers, only their reading.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bellsim {

inline constexpr double kProbabilityTolerance = 1e-12;

enum class Modality : std::uint8_t { factual, counterfactual };

std::string_view to_string(Modality m);

/// A named variable over an ordered finite domain. Domain order is fixed and
/// is the tie-break order for argmax queries. Copies share the domain.
class Variable {
 public:
  Variable(std::string name, std::vector<std::string> domain);

  const std::string& name() const { return name_; }
  const std::vector<std::string>& domain() const { return *domain_; }
  std::size_t size() const { return domain_->size(); }
  const std::string& label(std::size_t index) const;
  std::size_t index_of(std::string_view label) const;

  friend bool operator==(const Variable& a, const Variable& b) {
    return a.name_ == b.name_ && (a.domain_ == b.domain_ || *a.domain_ == *b.domain_);
  }

 private:
  std::string name_;
  std::shared_ptr<const std::vector<std::string>> domain_;
};

struct Conditioner {
  Variable variable;
  std::size_t value = 0;
  Modality modality = Modality::factual;

  const std::string& name() const { return variable.name(); }
  friend bool operator==(const Conditioner&, const Conditioner&) = default;
};

using Assignment = std::vector<std::size_t>;

namespace detail {
struct JointAccess;
}

class TaggedJoint {
 public:
  /// Validates: distinct names, no name both free and conditioned, table size
  /// matches the domains, entries nonnegative, sum within 1e-12 of one.
  TaggedJoint(std::string observer, std::vector<Variable> free,
              std::vector<Conditioner> conditioners, std::vector<double> probabilities);

  static TaggedJoint uniform(std::string observer, std::vector<Variable> free,
                             std::vector<Conditioner> conditioners = {});
  /// All mass on one assignment of the free variables.
  static TaggedJoint point_mass(std::string observer, std::vector<Variable> free,
                                const Assignment& at, std::vector<Conditioner> conditioners = {});

  const std::string& observer() const { return observer_; }
  std::span<const Variable> free() const { return free_; }
  std::span<const Conditioner> conditioners() const { return conditioners_; }
  std::span<const double> probabilities() const { return probabilities_; }
  std::size_t size() const { return probabilities_.size(); }

  std::optional<std::size_t> free_position(std::string_view name) const;
  const Conditioner* conditioner(std::string_view name) const;
  std::vector<std::string> free_names() const;

  double at(std::span<const std::size_t> assignment) const;
  std::size_t flat_index(std::span<const std::size_t> assignment) const;
  Assignment assignment_of(std::size_t flat) const;

  TaggedJoint with_observer(std::string observer) const;
  /// Replaces the conditioner list; the same validation as construction applies.
  TaggedJoint with_conditioners(std::vector<Conditioner> conditioners) const;

 private:
  friend struct detail::JointAccess;
  struct Unchecked {};
  TaggedJoint(Unchecked, std::string observer, std::vector<Variable> free,
              std::vector<Conditioner> conditioners, std::vector<double> probabilities);

  std::string observer_;
  std::vector<Variable> free_;
  std::vector<Conditioner> conditioners_;
  std::vector<double> probabilities_;
};

/// p(free | given) for every assignment of `given`, laid out given-major.
/// `context` holds the tagged conditioners shared by every slice.
class ConditionalTable {
 public:
  /// Validates that every slice is a distribution within 1e-12.
  ConditionalTable(std::string observer, std::vector<Variable> free, std::vector<Variable> given,
                   std::vector<Conditioner> context, std::vector<double> values);

  const std::string& observer() const { return observer_; }
  std::span<const Variable> free() const { return free_; }
  std::span<const Variable> given() const { return given_; }
  std::span<const Conditioner> context() const { return context_; }
  std::span<const double> values() const { return values_; }

  std::size_t free_cells() const;
  std::size_t given_cells() const;
  double at(std::size_t given_flat, std::size_t free_flat) const;

 private:
  friend struct detail::JointAccess;
  struct Unchecked {};
  ConditionalTable(Unchecked, std::string observer, std::vector<Variable> free,
                   std::vector<Variable> given, std::vector<Conditioner> context,
                   std::vector<double> values);

  std::string observer_;
  std::vector<Variable> free_;
  std::vector<Variable> given_;
  std::vector<Conditioner> context_;
  std::vector<double> values_;
};

/// Moves `name` into the conditioners (at the front) with tag `m` and
/// renormalizes. Throws ImpossibleEvidence when the assignment has zero mass.
TaggedJoint condition(const TaggedJoint& d, std::string_view name, std::size_t value, Modality m);

/// Sums `name` out, in domain order.
TaggedJoint marginalize(const TaggedJoint& d, std::string_view name);

/// Marginal over `keep`, in that order.
TaggedJoint marginal_over(const TaggedJoint& d, const std::vector<std::string>& keep);

/// Reorders the free variables; `order` must be a permutation of them.
TaggedJoint reorder(const TaggedJoint& d, const std::vector<std::string>& order);

/// p(rest | given). Slices whose given-assignment has zero mass are filled
/// uniformly so the table stays a valid conditional; the product with the
/// matching marginal zeroes them again.
ConditionalTable conditional_table(const TaggedJoint& d, const std::vector<std::string>& given);

/// conditional x marginal. The conditional's given variables must be exactly
/// the marginal's free variables. Result free order: conditional free, then
/// marginal free.
TaggedJoint product(const ConditionalTable& conditional, const TaggedJoint& marginal);

/// p(h | e) = p(e | h) p(h) / p(e) for the observed assignment `e` of the
/// likelihood's free variables. The prior's free variables must be exactly
/// the likelihood's given variables.
TaggedJoint bayes_invert(const TaggedJoint& prior, const ConditionalTable& likelihood,
                         std::span<const std::size_t> observed, Modality m = Modality::factual);

/// Most probable assignment; ties go to the lowest index in domain order.
Assignment argmax(const TaggedJoint& d);

/// Same free variables (any order), same conditioners (any order, including
/// tags) and entries within `tol` once aligned. Observer labels are ignored.
bool approx_equal(const TaggedJoint& a, const TaggedJoint& b, double tol = kProbabilityTolerance);

/// Largest entrywise difference after alignment; throws InvalidArgument when
/// the free variables differ.
double max_abs_difference(const TaggedJoint& a, const TaggedJoint& b);

/// `P_<obs>(<free>|<counterfactual>|<factual>)`; an empty counterfactual slot
/// renders as a double bar, no conditioners renders as `P_<obs>(<free>)`.
std::string render(const TaggedJoint& d);

/// Blocks B1..Bk read as p(B1|B2..Bk) p(B2|B3..Bk) ... p(Bk).
struct Factorization {
  std::vector<std::vector<std::string>> blocks;

  std::string describe() const;
  friend bool operator==(const Factorization&, const Factorization&) = default;
};

enum class FactorizationScope : std::uint8_t {
  chain,           // n! single-variable chain-rule orderings
  ordered_blocks,  // every ordered set partition, chain orderings included
};

std::vector<Factorization> enumerate_factorizations(const TaggedJoint& d,
                                                    FactorizationScope scope = FactorizationScope::chain);

/// Rebuilds the joint from the factors of `f`, each computed from `d`.
TaggedJoint remultiply(const TaggedJoint& d, const Factorization& f);

}  // namespace bellsim
