#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vopr/mdp.hpp"
#include "vopr/occupancy.hpp"

namespace vopr {

enum class FunctionKind { Q, W, B };

std::string to_string(FunctionKind kind);
FunctionKind parse_function_kind(const std::string& text);

/// Explicit finite function class over S x A. `bound` is V_max for a Q class
/// and the largest member entry (U_W, U_B) for W and B classes.
struct FiniteFunctionClass {
  FunctionKind kind = FunctionKind::Q;
  std::vector<Table> members;
  double bound = 0.0;

  std::size_t size() const noexcept { return members.size(); }
};

/// Checks membership bounds for every member. For a B class, `pi_c` is
/// required and each member must satisfy sum_a beta(s, a) pi_c(a | s) = 1.
void validate_class(const FiniteFunctionClass& cls, const Policy* pi_c = nullptr);

/// Largest entry over all members (0 for an empty class).
double max_entry(const FiniteFunctionClass& cls);

/**
 * Density ratio w* with w* o d_data = (I - gamma P_{pi*_e})^{-1} (d_c o Q*).
 *
 * Entries where both sides vanish get the 0/0 = 1 convention. Throws
 * UnrealizableError when the right-hand side has mass where d_data has none.
 */
Table optimal_w(const TabularMDP& mdp, const OptimalSolution& opt, const SADistribution& d_c,
                const SADistribution& d_data);
Table optimal_w(const TabularMDP& mdp, const SADistribution& d_c, const SADistribution& d_data);

/// beta*(s, a) = pi*_e(a | s) / pi_c(a | s), 0/0 = 1. Throws UnrealizableError
/// ("policy uncovered") when pi*_e has mass where pi_c has none.
Table optimal_beta(const Policy& pi_star_e, const Policy& pi_c);

struct DistractorOptions {
  std::size_t q_distractors = 0;
  std::size_t w_distractors = 0;
  std::size_t b_distractors = 0;
  /// Noise amplitude relative to the realized element's scale.
  double scale = 0.3;
};

/// Q, W and B classes each holding its realized element plus random
/// distractors. `*_index` locate Q*, w* and beta* inside their class.
struct RealizableClasses {
  FiniteFunctionClass q;
  FiniteFunctionClass w;
  FiniteFunctionClass b;
  std::size_t q_index = 0;
  std::size_t w_index = 0;
  std::size_t b_index = 0;
};

RealizableClasses build_realizable_classes(const TabularMDP& mdp, const OptimalSolution& opt,
                                           const SADistribution& d_c,
                                           const SADistribution& d_data, const Policy& pi_c,
                                           const DistractorOptions& options,
                                           std::uint64_t seed);

/// Same number of distractors in every class.
RealizableClasses build_realizable_classes(const TabularMDP& mdp, const SADistribution& d_c,
                                           const SADistribution& d_data, const Policy& pi_c,
                                           std::size_t n_distractors, std::uint64_t seed,
                                           double scale = 0.3);

}  // namespace vopr
