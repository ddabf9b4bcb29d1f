#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "vopr/function_classes.hpp"
#include "vopr/mdp.hpp"
#include "vopr/occupancy.hpp"

namespace vopr {

/// Slack allowed when comparing returns in the near-optimality filter and in
/// the bound checks below.
inline constexpr double kReturnTolerance = 1e-9;

struct EnumerationOptions {
  std::size_t horizon = 0;
  std::size_t cap = 200000;
  /// Only branch on states reachable at each step and merge actions with
  /// identical (P(.|s,a), R(s,a)). Without it every deterministic decision
  /// rule is enumerated at every step.
  bool dedupe = true;
};

/// A deterministic non-stationary policy with its exact return and
/// normalized discounted state occupancy from mu0.
struct EnumeratedPolicy {
  NonStationaryPolicy policy;
  double value = 0.0;
  Vector state_occupancy;
};

/// All deterministic non-stationary policies with a prefix of at most
/// `horizon` steps followed by a deterministic stationary tail. Throws
/// EnumerationTooLarge above options.cap.
std::vector<EnumeratedPolicy> enumerate_policies(const TabularMDP& mdp,
                                                 const EnumerationOptions& options);

/// Members of enumerate_policies with J* - J <= eps (+ kReturnTolerance).
/// Complete only relative to the declared horizon.
std::vector<EnumeratedPolicy> near_optimal_policies(const TabularMDP& mdp, double eps,
                                                    const EnumerationOptions& options);
std::vector<EnumeratedPolicy> near_optimal_policies(const TabularMDP& mdp, double j_star,
                                                    double eps,
                                                    const std::vector<EnumeratedPolicy>& all);

struct ConcentrabilityReport {
  double coefficient = 1.0;  ///< may be +inf
  std::optional<NonStationaryPolicy> witness_policy;
  std::size_t witness_policy_index = 0;
  Eigen::Index witness_index = 0;  ///< state (C_c) or state-action pair (C_D)
  std::size_t horizon_used = 0;
  std::size_t policy_count = 0;
};

/// C_c = max over enumerated eps-near-optimal pi of ||mu_pi / mu_c||_inf.
/// A lower bound on the coefficient over all non-stationary policies.
ConcentrabilityReport concentrability_cc(const TabularMDP& mdp, const StateDistribution& mu_c,
                                         double eps, const EnumerationOptions& options);
ConcentrabilityReport concentrability_cc(const StateDistribution& mu_c, double j_star,
                                         double eps, const std::vector<EnumeratedPolicy>& all,
                                         std::size_t horizon);

/// C_D = ||d_{d_c, pi*_e} / d_data||_inf.
ConcentrabilityReport concentrability_cd(const TabularMDP& mdp, const OptimalSolution& opt,
                                         const SADistribution& d_c,
                                         const SADistribution& d_data);
ConcentrabilityReport concentrability_cd(const TabularMDP& mdp, const SADistribution& d_c,
                                         const SADistribution& d_data);

/// sum_k weights[k] d_{pi_k}, occupancies from mu0.
SADistribution mixture_covering(const TabularMDP& mdp,
                                const std::vector<NonStationaryPolicy>& policies,
                                const Vector& weights);

/// Largest ||d_{pi~_i, j} / d_data||_inf over the given policies pi~, switch
/// points i and steps j up to the step where gamma^j drops below `tail`.
/// pi~_i follows pi~ through step i and pi*_e afterwards.
double max_per_step_coefficient(const TabularMDP& mdp, const OptimalSolution& opt,
                                const std::vector<NonStationaryPolicy>& policies,
                                const SADistribution& d_data, double tail = 1e-12);

/// Policy that follows `pi` at steps 0..last_step and `after` from then on.
NonStationaryPolicy switched_policy(const NonStationaryPolicy& pi, const Policy& after,
                                    std::size_t last_step);

struct AdvantageReport {
  double premise = 0.0;  ///< <mu_c, Q*(., pi^) - Q*(., pi*_e)>
  double gap = 0.0;      ///< J* - J_pi^
  double bound = 0.0;    ///< C_c eps / (1 - gamma)
  bool coverage_failure = false;
  bool holds = false;  ///< gap <= bound
  /// J* - J of the switched policies pi^_i, i = 0..horizon.
  std::vector<double> switched_gaps;
  /// |(1-gamma)(J_{pi^_i} - J*) - <mu^{0:i}_{pi^_i}, Q*(., pi^) - Q*(., pi*_e)>|.
  std::vector<double> telescoping_residuals;
  bool induction_holds = false;
};

/// Evaluates the premise and conclusion of the advantage-to-suboptimality
/// argument and replays its induction over pi^_0..pi^_horizon. Throws
/// PremiseViolated when the premise fails by more than kReturnTolerance.
AdvantageReport verify_advantage_to_suboptimality(const TabularMDP& mdp,
                                                  const OptimalSolution& opt,
                                                  const StateDistribution& mu_c,
                                                  const Policy& pi_hat, double eps_adv,
                                                  double c_c, std::size_t horizon = 32);

/// Both sides of the telescoped performance difference for pi^_i.
struct TelescopingSides {
  double lhs = 0.0;
  double rhs = 0.0;
};

TelescopingSides telescoping_identity(const TabularMDP& mdp, const OptimalSolution& opt,
                                      const Policy& pi_hat, std::size_t i);

/// sqrt(sum d (q - Q*)^2) and sum d |q - Q*|.
double weighted_l2_distance(const SADistribution& d, const Table& q, const Table& q_star);
double weighted_l1_distance(const SADistribution& d, const Table& q, const Table& q_star);

struct QErrorCheck {
  double distance = 0.0;
  double bound = 0.0;
  bool holds = false;
};

/// ||q^ - Q*||_{d_c,2} <= 2 sqrt(eps_stat).
QErrorCheck verify_q_error(const OptimalSolution& opt, const SADistribution& d_c,
                           const QFunction& q_hat, double eps_stat);
bool verify_q_error(const TabularMDP& mdp, const SADistribution& d_c, const QFunction& q_hat,
                    double eps_stat);

struct L1AdvantageCheck {
  double lhs = 0.0;  ///< <Q*(., pi*_e) - Q*(., pi^), mu_c>
  double rhs = 0.0;  ///< 2 U_B ||q^ - Q*||_{d_c,1}
  bool holds = false;
};

/// d_c is taken as mu_c x pi_c.
L1AdvantageCheck verify_l1_advantage(const OptimalSolution& opt, const StateDistribution& mu_c,
                                     const Policy& pi_c, const QFunction& q_hat,
                                     const Policy& pi_hat, double u_b);
bool verify_l1_advantage(const TabularMDP& mdp, const StateDistribution& mu_c,
                         const Policy& pi_c, const QFunction& q_hat, const Policy& pi_hat,
                         double u_b);

}  // namespace vopr
