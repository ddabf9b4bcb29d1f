#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace vopr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A function tabulated over S x A, stored as an n_states x n_actions matrix.
using Table = Eigen::MatrixXd;

/// Tolerance used for row sums of transition rows, policies and initial
/// distributions.
inline constexpr double kProbabilityTolerance = 1e-12;

/// Relative tolerance under which two action values count as tied when a
/// greedy action is chosen.
inline constexpr double kTieTolerance = 1e-9;

/**
 * Finite discounted MDP (S, A, P, R, gamma, mu0).
 *
 * The transition tensor is stored flattened as an (S*A) x S matrix whose row
 * `s * n_actions + a` is P(. | s, a). Rewards are deterministic and lie in
 * [0, r_max].
 */
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  Matrix transition;
  Table reward;
  double gamma = 0.0;
  Vector initial_dist;
  double r_max = 0.0;

  Eigen::Index pair(int s, int a) const noexcept {
    return static_cast<Eigen::Index>(s) * n_actions + a;
  }
  Eigen::Index n_pairs() const noexcept {
    return static_cast<Eigen::Index>(n_states) * n_actions;
  }
  double prob(int s, int a, int next) const { return transition(pair(s, a), next); }
  /// Upper bound on any discounted return, R_max / (1 - gamma).
  double v_max() const noexcept { return r_max / (1.0 - gamma); }
};

/// Stationary stochastic policy; row s of `probs` is pi(. | s).
struct Policy {
  Matrix probs;

  int n_states() const noexcept { return static_cast<int>(probs.rows()); }
  int n_actions() const noexcept { return static_cast<int>(probs.cols()); }

  static Policy uniform(int n_states, int n_actions);
  static Policy deterministic(const std::vector<int>& actions, int n_actions);

  bool is_deterministic() const;
  /// Action with the largest probability at s (lowest index on ties).
  int mode(int s) const;

  friend bool operator==(const Policy& a, const Policy& b) { return a.probs == b.probs; }
};

/// Policy that follows prefix[t] at step t < horizon and `tail` afterwards.
struct NonStationaryPolicy {
  std::vector<Policy> prefix;
  Policy tail;

  static NonStationaryPolicy stationary(const Policy& pi) { return {{}, pi}; }

  std::size_t horizon() const noexcept { return prefix.size(); }
  const Policy& at(std::size_t step) const noexcept {
    return step < prefix.size() ? prefix[step] : tail;
  }
};

struct QFunction {
  Table values;

  double operator()(int s, int a) const { return values(s, a); }
};

/// Throws ValidationError naming the first violated invariant; returns the
/// MDP unchanged otherwise.
TabularMDP validate_mdp(TabularMDP mdp);

void validate_policy(const Policy& pi, int n_states, int n_actions);
void validate_policy(const NonStationaryPolicy& pi, int n_states, int n_actions);

/// Stable 64-bit fingerprint of every field of the MDP (FNV-1a over the bit
/// patterns).
std::uint64_t fingerprint(const TabularMDP& mdp);

/// T*q(s, a) = R(s, a) + gamma * E_{s'}[max_a' q(s', a')].
Table bellman_optimality(const TabularMDP& mdp, const Table& q);

/// q(s, pi) = sum_a pi(a | s) q(s, a), one entry per state.
Vector action_average(const Table& q, const Policy& pi);

struct ValueIterationResult {
  QFunction q;
  int iterations = 0;
  double residual = 0.0;
};

/// Iterates T* from zero until the Bellman residual is small enough that
/// ||q - Q*||_inf <= tol.
ValueIterationResult value_iteration(const TabularMDP& mdp, double tol);

/// Exact Q_pi from the linear evaluation system (I - gamma P Pi) Q = R.
QFunction policy_q_values(const TabularMDP& mdp, const Policy& pi);

/// V_pi(s) = Q_pi(s, pi).
Vector policy_state_values(const TabularMDP& mdp, const Policy& pi);

double expected_return(const TabularMDP& mdp, const Policy& pi);
double expected_return(const TabularMDP& mdp, const NonStationaryPolicy& pi);

/// Discounted reward collected at steps 0..last_step (inclusive) from mu0.
double partial_return(const TabularMDP& mdp, const NonStationaryPolicy& pi,
                      std::size_t last_step);

/// Deterministic argmax of q at every state; ties (within kTieTolerance,
/// relative) go to the lowest action index.
Policy greedy_policy(const QFunction& q, double tie_tol = kTieTolerance);

/// Q*, an everywhere-optimal policy pi*_e, V*, and J*. Value iteration gets
/// close, then policy iteration with exact linear solves polishes Q* to
/// machine precision so near-ties resolve deterministically.
struct OptimalSolution {
  QFunction q_star;
  Policy pi_star_e;
  Vector v_star;
  double j_star = 0.0;
};

OptimalSolution solve_optimal(const TabularMDP& mdp);

/// Both sides of (1 - gamma)(J_pi1 - J_pi2) = <mu_pi1, Q_pi2(., pi1) - Q_pi2(., pi2)>,
/// computed by independent routes.
struct PerformanceDifference {
  double lhs = 0.0;
  double rhs = 0.0;
};

PerformanceDifference performance_difference(const TabularMDP& mdp, const Policy& pi1,
                                             const Policy& pi2);

}  // namespace vopr
