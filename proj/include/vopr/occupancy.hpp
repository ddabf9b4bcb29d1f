#pragma once

#include <cstddef>
#include <optional>

#include "vopr/mdp.hpp"

namespace vopr {

inline constexpr double kDistributionTolerance = 1e-10;

/// Probability vector over S x A in s-major order (index s * n_actions + a).
struct SADistribution {
  Vector weights;
};

/// Probability vector over S.
struct StateDistribution {
  Vector weights;
};

void validate_distribution(const SADistribution& d, Eigen::Index n_pairs);
void validate_distribution(const StateDistribution& d, Eigen::Index n_states);

SADistribution uniform_sa(int n_states, int n_actions);
StateDistribution uniform_states(int n_states);

/// (mu x pi)(s, a) = mu(s) pi(a | s).
SADistribution compose(const StateDistribution& mu, const Policy& pi);

/// Marginal over states of an S x A vector (distribution or measure).
Vector state_marginal(const Vector& sa, int n_states, int n_actions);

/// Conditional pi(a | s) = d(s, a) / mu(s); falls back to `fallback` where
/// mu(s) = 0.
Policy conditional_policy(const SADistribution& d, int n_states, int n_actions,
                          const Policy& fallback);

/// Dense (S*A) x (S*A) matrix of P_pi: entry (s'a', sa) is pi(a'|s') P(s'|s,a).
Matrix transition_operator(const TabularMDP& mdp, const Policy& pi);

/// One step forward: (P_pi d)(s', a') = pi(a'|s') sum_{s,a} P(s'|s,a) d(s,a).
Vector apply_transition(const TabularMDP& mdp, const Policy& pi, const Vector& d);

/// One step backward: (P_pi* q)(s, a) = sum_{s'} P(s'|s,a) sum_{a'} pi(a'|s') q(s', a').
Table apply_adjoint(const TabularMDP& mdp, const Policy& pi, const Table& q);

/// d_{d,pi} = (1 - gamma)(I - gamma P_pi)^{-1} d by direct LU solve.
SADistribution occupancy_measure(const TabularMDP& mdp, const Policy& pi,
                                 const SADistribution& start);
SADistribution occupancy_measure(const TabularMDP& mdp, const Policy& pi,
                                 const StateDistribution& start);
/// Occupancy of a non-stationary policy from mu0.
SADistribution occupancy_measure(const TabularMDP& mdp, const NonStationaryPolicy& pi,
                                 const StateDistribution& start);

/// (1 - gamma) sum_{i=0..terms} (gamma P_pi)^i d. Cross-check only.
Vector neumann_occupancy(const TabularMDP& mdp, const Policy& pi, const Vector& start,
                         std::size_t terms);

/// Step-t state-action distributions d_0..d_last of a non-stationary policy.
/// With a state start, d_0 = start x pi_0; with a state-action start, d_0 = start.
std::vector<Vector> step_distributions(const TabularMDP& mdp, const NonStationaryPolicy& pi,
                                       const StateDistribution& start, std::size_t last);
std::vector<Vector> step_distributions(const TabularMDP& mdp, const NonStationaryPolicy& pi,
                                       const SADistribution& start, std::size_t last);

/**
 * Steps first..last part of the discounted occupancy, as an unnormalized
 * measure over S x A:
 *
 *   (1 - gamma) * sum_{t = first..last} gamma^t d_t.
 *
 * `last == std::nullopt` means the whole tail; it is folded into one linear
 * solve against the stationary tail policy.
 */
Vector truncated_occupancy(const TabularMDP& mdp, const NonStationaryPolicy& pi,
                           const StateDistribution& start, std::size_t first,
                           std::optional<std::size_t> last);
Vector truncated_occupancy(const TabularMDP& mdp, const NonStationaryPolicy& pi,
                           const SADistribution& start, std::size_t first,
                           std::optional<std::size_t> last);

/// Masses at or below this magnitude count as zero in density ratios, so
/// round-off left by a linear solve does not read as lost coverage.
inline constexpr double kZeroMass = 1e-13;

/// Elementwise num / den with 0/0 = 1 and positive/0 = +inf.
Vector density_ratio(const Vector& num, const Vector& den);

struct RatioSup {
  double value = 1.0;
  Eigen::Index argmax = 0;  ///< lowest index attaining the sup
};

/// ||num / den||_inf under the density_ratio conventions; +inf signals a
/// coverage failure and is a legal result.
RatioSup sup_ratio(const Vector& num, const Vector& den);

}  // namespace vopr
