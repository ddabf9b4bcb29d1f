#include "vopr/theory.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/LU>

#include "vopr/errors.hpp"

namespace vopr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kIdentityTolerance = 1e-8;

// Actions whose (P(.|s,a), R(s,a)) is identical to a lower-index action are
// dropped: they cannot change any return or occupancy.
std::vector<std::vector<int>> representative_actions(const TabularMDP& mdp, bool dedupe) {
  std::vector<std::vector<int>> reps(static_cast<std::size_t>(mdp.n_states));
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      bool duplicate = false;
      if (dedupe) {
        for (int b : reps[s]) {
          if (mdp.reward(s, a) == mdp.reward(s, b) &&
              mdp.transition.row(mdp.pair(s, a)) == mdp.transition.row(mdp.pair(s, b))) {
            duplicate = true;
            break;
          }
        }
      }
      if (!duplicate) reps[s].push_back(a);
    }
  }
  return reps;
}

class Enumerator {
 public:
  Enumerator(const TabularMDP& mdp, const EnumerationOptions& options)
      : mdp_(mdp), options_(options), reps_(representative_actions(mdp, options.dedupe)) {}

  std::vector<EnumeratedPolicy> run() {
    const int S = mdp_.n_states;
    prefix_.assign(options_.horizon, std::vector<int>(S, -1));
    prefix_step(0, mdp_.initial_dist, 0.0, Vector::Zero(S), 1.0);
    return std::move(out_);
  }

 private:
  bool in_play(int s, const Vector& nu) const { return !options_.dedupe || nu[s] > 0.0; }

  void prefix_step(std::size_t t, const Vector& nu, double value, const Vector& occ,
                   double discount) {
    if (t == options_.horizon) {
      tail_.assign(static_cast<std::size_t>(mdp_.n_states), -1);
      tail_search(nu, value, occ, discount);
      return;
    }
    assign_prefix(t, 0, nu, value, occ, discount);
  }

  // Chooses actions at step t for states s.. in play, then advances.
  void assign_prefix(std::size_t t, int s, const Vector& nu, double value, const Vector& occ,
                     double discount) {
    const int S = mdp_.n_states;
    while (s < S && !in_play(s, nu)) ++s;
    if (s == S) {
      const double g = mdp_.gamma;
      Vector next = Vector::Zero(S);
      double reward = 0.0;
      for (int x = 0; x < S; ++x) {
        if (!in_play(x, nu)) continue;
        const int a = prefix_[t][x];
        reward += nu[x] * mdp_.reward(x, a);
        next += nu[x] * mdp_.transition.row(mdp_.pair(x, a)).transpose();
      }
      prefix_step(t + 1, next, value + discount * reward, occ + (1.0 - g) * discount * nu,
                  discount * g);
      return;
    }
    for (int a : reps_[s]) {
      prefix_[t][s] = a;
      assign_prefix(t, s + 1, nu, value, occ, discount);
    }
    prefix_[t][s] = -1;
  }

  // Lowest state that the tail must decide: in the support of the start of
  // the tail or reachable from an already decided state.
  int next_needed(const Vector& nu) const {
    const int S = mdp_.n_states;
    if (!options_.dedupe) {
      for (int s = 0; s < S; ++s)
        if (tail_[s] < 0) return s;
      return -1;
    }
    std::vector<char> needed(static_cast<std::size_t>(S), 0);
    for (int s = 0; s < S; ++s) {
      if (nu[s] > 0.0) needed[s] = 1;
      if (tail_[s] >= 0) {
        const auto row = mdp_.transition.row(mdp_.pair(s, tail_[s]));
        for (int x = 0; x < S; ++x)
          if (row[x] > 0.0) needed[x] = 1;
      }
    }
    for (int s = 0; s < S; ++s)
      if (needed[s] && tail_[s] < 0) return s;
    return -1;
  }

  void tail_search(const Vector& nu, double value, const Vector& occ, double discount) {
    const int s = next_needed(nu);
    if (s < 0) {
      emit(nu, value, occ, discount);
      return;
    }
    for (int a : reps_[s]) {
      tail_[s] = a;
      tail_search(nu, value, occ, discount);
    }
    tail_[s] = -1;
  }

  void emit(const Vector& nu, double value, const Vector& occ, double discount) {
    if (out_.size() >= options_.cap) throw EnumerationTooLarge(options_.cap);
    const int S = mdp_.n_states;
    const int A = mdp_.n_actions;
    std::vector<int> tail(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) tail[s] = std::max(tail_[s], 0);

    Matrix p_tail(S, S);
    Vector r_tail(S);
    for (int s = 0; s < S; ++s) {
      p_tail.row(s) = mdp_.transition.row(mdp_.pair(s, tail[s]));
      r_tail[s] = mdp_.reward(s, tail[s]);
    }
    const Matrix system = Matrix::Identity(S, S) - mdp_.gamma * p_tail;
    const Eigen::PartialPivLU<Matrix> lu(system);
    const Vector v_tail = lu.solve(r_tail);
    const Vector occ_tail =
        (1.0 - mdp_.gamma) * system.transpose().partialPivLu().solve(nu);

    EnumeratedPolicy ep;
    ep.value = value + discount * nu.dot(v_tail);
    ep.state_occupancy = occ + discount * occ_tail;
    ep.policy.tail = Policy::deterministic(tail, A);
    for (const auto& rule : prefix_) {
      std::vector<int> actions(static_cast<std::size_t>(S));
      for (int s = 0; s < S; ++s) actions[s] = rule[s] >= 0 ? rule[s] : tail[s];
      ep.policy.prefix.push_back(Policy::deterministic(actions, A));
    }
    out_.push_back(std::move(ep));
  }

  const TabularMDP& mdp_;
  const EnumerationOptions& options_;
  std::vector<std::vector<int>> reps_;
  std::vector<std::vector<int>> prefix_;
  std::vector<int> tail_;
  std::vector<EnumeratedPolicy> out_;
};

ConcentrabilityReport ratio_report(const std::vector<const EnumeratedPolicy*>& policies,
                                   const std::vector<std::size_t>& indices,
                                   const StateDistribution& mu_c, std::size_t horizon) {
  ConcentrabilityReport report;
  report.horizon_used = horizon;
  report.policy_count = policies.size();
  for (std::size_t k = 0; k < policies.size(); ++k) {
    const RatioSup r = sup_ratio(policies[k]->state_occupancy, mu_c.weights);
    if (k == 0 || r.value > report.coefficient) {
      report.coefficient = r.value;
      report.witness_policy = policies[k]->policy;
      report.witness_policy_index = indices[k];
      report.witness_index = r.argmax;
    }
  }
  return report;
}

double advantage_inner_product(const OptimalSolution& opt, const Vector& weights,
                               const Policy& pi_hat) {
  const Vector adv = action_average(opt.q_star.values, pi_hat) -
                     action_average(opt.q_star.values, opt.pi_star_e);
  return weights.dot(adv);
}

}  // namespace

std::vector<EnumeratedPolicy> enumerate_policies(const TabularMDP& mdp,
                                                 const EnumerationOptions& options) {
  if (!options.dedupe) {
    // Full count (A^S)^(H+1), checked against the cap before any work.
    double count = 1.0;
    const double rules = std::pow(static_cast<double>(mdp.n_actions), mdp.n_states);
    for (std::size_t t = 0; t <= options.horizon; ++t) {
      count *= rules;
      if (count > static_cast<double>(options.cap)) throw EnumerationTooLarge(options.cap);
    }
  }
  Enumerator e(mdp, options);
  return e.run();
}

std::vector<EnumeratedPolicy> near_optimal_policies(const TabularMDP& mdp, double j_star,
                                                    double eps,
                                                    const std::vector<EnumeratedPolicy>& all) {
  (void)mdp;
  if (!(eps >= 0.0)) throw ValidationError("near_optimal_policies: eps must be >= 0");
  std::vector<EnumeratedPolicy> out;
  for (const auto& p : all)
    if (j_star - p.value <= eps + kReturnTolerance) out.push_back(p);
  return out;
}

std::vector<EnumeratedPolicy> near_optimal_policies(const TabularMDP& mdp, double eps,
                                                    const EnumerationOptions& options) {
  return near_optimal_policies(mdp, solve_optimal(mdp).j_star, eps,
                               enumerate_policies(mdp, options));
}

ConcentrabilityReport concentrability_cc(const StateDistribution& mu_c, double j_star,
                                         double eps, const std::vector<EnumeratedPolicy>& all,
                                         std::size_t horizon) {
  if (!(eps >= 0.0)) throw ValidationError("concentrability_cc: eps must be >= 0");
  std::vector<const EnumeratedPolicy*> kept;
  std::vector<std::size_t> indices;
  for (std::size_t k = 0; k < all.size(); ++k) {
    if (j_star - all[k].value <= eps + kReturnTolerance) {
      kept.push_back(&all[k]);
      indices.push_back(k);
    }
  }
  return ratio_report(kept, indices, mu_c, horizon);
}

ConcentrabilityReport concentrability_cc(const TabularMDP& mdp, const StateDistribution& mu_c,
                                         double eps, const EnumerationOptions& options) {
  validate_distribution(mu_c, mdp.n_states);
  return concentrability_cc(mu_c, solve_optimal(mdp).j_star, eps,
                            enumerate_policies(mdp, options), options.horizon);
}

ConcentrabilityReport concentrability_cd(const TabularMDP& mdp, const OptimalSolution& opt,
                                         const SADistribution& d_c,
                                         const SADistribution& d_data) {
  const SADistribution flow = occupancy_measure(mdp, opt.pi_star_e, d_c);
  const RatioSup r = sup_ratio(flow.weights, d_data.weights);
  ConcentrabilityReport report;
  report.coefficient = r.value;
  report.witness_policy = NonStationaryPolicy::stationary(opt.pi_star_e);
  report.witness_index = r.argmax;
  report.policy_count = 1;
  return report;
}

ConcentrabilityReport concentrability_cd(const TabularMDP& mdp, const SADistribution& d_c,
                                         const SADistribution& d_data) {
  return concentrability_cd(mdp, solve_optimal(mdp), d_c, d_data);
}

SADistribution mixture_covering(const TabularMDP& mdp,
                                const std::vector<NonStationaryPolicy>& policies,
                                const Vector& weights) {
  if (policies.empty() || static_cast<Eigen::Index>(policies.size()) != weights.size()) {
    throw ValidationError("mixture_covering: need one weight per policy");
  }
  validate_distribution(StateDistribution{weights}, weights.size());
  const StateDistribution mu0{mdp.initial_dist};
  Vector out = Vector::Zero(mdp.n_pairs());
  for (std::size_t k = 0; k < policies.size(); ++k) {
    out += weights[static_cast<Eigen::Index>(k)] * occupancy_measure(mdp, policies[k], mu0).weights;
  }
  return {out};
}

NonStationaryPolicy switched_policy(const NonStationaryPolicy& pi, const Policy& after,
                                    std::size_t last_step) {
  NonStationaryPolicy out;
  out.prefix.reserve(last_step + 1);
  for (std::size_t t = 0; t <= last_step; ++t) out.prefix.push_back(pi.at(t));
  out.tail = after;
  return out;
}

double max_per_step_coefficient(const TabularMDP& mdp, const OptimalSolution& opt,
                                const std::vector<NonStationaryPolicy>& policies,
                                const SADistribution& d_data, double tail) {
  // Last step T with gamma^T >= tail.
  const std::size_t last =
      static_cast<std::size_t>(std::ceil(std::log(tail) / std::log(mdp.gamma)));
  const StateDistribution mu0{mdp.initial_dist};
  double best = 0.0;
  for (const auto& pi : policies) {
    const std::vector<Vector> own = step_distributions(mdp, pi, mu0, last);
    for (const auto& d : own) best = std::max(best, sup_ratio(d, d_data.weights).value);
    for (std::size_t i = 0; i <= last; ++i) {
      // Steps j <= i follow pi (covered above); later steps follow pi*_e.
      Vector d = own[i];
      for (std::size_t j = i + 1; j <= last; ++j) {
        d = apply_transition(mdp, opt.pi_star_e, d);
        best = std::max(best, sup_ratio(d, d_data.weights).value);
      }
      if (std::isinf(best)) return best;
    }
  }
  return best;
}

TelescopingSides telescoping_identity(const TabularMDP& mdp, const OptimalSolution& opt,
                                      const Policy& pi_hat, std::size_t i) {
  const NonStationaryPolicy switched =
      switched_policy(NonStationaryPolicy::stationary(pi_hat), opt.pi_star_e, i);
  const Vector head = truncated_occupancy(mdp, switched, StateDistribution{mdp.initial_dist}, 0, i);
  TelescopingSides out;
  out.lhs = (1.0 - mdp.gamma) * (expected_return(mdp, switched) - opt.j_star);
  out.rhs = advantage_inner_product(opt, state_marginal(head, mdp.n_states, mdp.n_actions), pi_hat);
  return out;
}

AdvantageReport verify_advantage_to_suboptimality(const TabularMDP& mdp,
                                                  const OptimalSolution& opt,
                                                  const StateDistribution& mu_c,
                                                  const Policy& pi_hat, double eps_adv,
                                                  double c_c, std::size_t horizon) {
  validate_distribution(mu_c, mdp.n_states);
  validate_policy(pi_hat, mdp.n_states, mdp.n_actions);
  AdvantageReport report;
  report.premise = advantage_inner_product(opt, mu_c.weights, pi_hat);
  if (report.premise < -eps_adv - kReturnTolerance) {
    std::ostringstream msg;
    msg << "premise violated: advantage inner product " << report.premise << " < -" << eps_adv;
    throw PremiseViolated(msg.str());
  }
  report.gap = opt.j_star - expected_return(mdp, pi_hat);
  report.coverage_failure = !std::isfinite(c_c);
  report.bound = report.coverage_failure ? kInf : c_c * eps_adv / (1.0 - mdp.gamma);
  report.holds = report.gap <= report.bound + kReturnTolerance;

  report.induction_holds = true;
  for (std::size_t i = 0; i <= horizon; ++i) {
    const TelescopingSides sides = telescoping_identity(mdp, opt, pi_hat, i);
    const double gap_i = -sides.lhs / (1.0 - mdp.gamma);
    const double residual = std::abs(sides.lhs - sides.rhs);
    report.switched_gaps.push_back(gap_i);
    report.telescoping_residuals.push_back(residual);
    if (gap_i > report.bound + kReturnTolerance || residual > kIdentityTolerance) {
      report.induction_holds = false;
    }
  }
  return report;
}

double weighted_l2_distance(const SADistribution& d, const Table& q, const Table& q_star) {
  const auto A = q.cols();
  double total = 0.0;
  for (Eigen::Index s = 0; s < q.rows(); ++s)
    for (Eigen::Index a = 0; a < A; ++a) {
      const double diff = q(s, a) - q_star(s, a);
      total += d.weights[s * A + a] * diff * diff;
    }
  return std::sqrt(total);
}

double weighted_l1_distance(const SADistribution& d, const Table& q, const Table& q_star) {
  const auto A = q.cols();
  double total = 0.0;
  for (Eigen::Index s = 0; s < q.rows(); ++s)
    for (Eigen::Index a = 0; a < A; ++a)
      total += d.weights[s * A + a] * std::abs(q(s, a) - q_star(s, a));
  return total;
}

QErrorCheck verify_q_error(const OptimalSolution& opt, const SADistribution& d_c,
                           const QFunction& q_hat, double eps_stat) {
  QErrorCheck out;
  out.distance = weighted_l2_distance(d_c, q_hat.values, opt.q_star.values);
  out.bound = 2.0 * std::sqrt(eps_stat);
  out.holds = out.distance <= out.bound;
  return out;
}

bool verify_q_error(const TabularMDP& mdp, const SADistribution& d_c, const QFunction& q_hat,
                    double eps_stat) {
  return verify_q_error(solve_optimal(mdp), d_c, q_hat, eps_stat).holds;
}

L1AdvantageCheck verify_l1_advantage(const OptimalSolution& opt, const StateDistribution& mu_c,
                                     const Policy& pi_c, const QFunction& q_hat,
                                     const Policy& pi_hat, double u_b) {
  L1AdvantageCheck out;
  out.lhs = -advantage_inner_product(opt, mu_c.weights, pi_hat);
  out.rhs = 2.0 * u_b * weighted_l1_distance(compose(mu_c, pi_c), q_hat.values, opt.q_star.values);
  out.holds = out.lhs <= out.rhs + kReturnTolerance;
  return out;
}

bool verify_l1_advantage(const TabularMDP& mdp, const StateDistribution& mu_c,
                         const Policy& pi_c, const QFunction& q_hat, const Policy& pi_hat,
                         double u_b) {
  return verify_l1_advantage(solve_optimal(mdp), mu_c, pi_c, q_hat, pi_hat, u_b).holds;
}

}  // namespace vopr
