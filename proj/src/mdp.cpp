#include "vopr/mdp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include <Eigen/LU>

#include "vopr/errors.hpp"
#include "vopr/occupancy.hpp"

namespace vopr {

namespace {

void check_probability_row(const Eigen::Ref<const Vector>& row, double tol,
                           const std::string& where) {
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    if (!(row[i] >= 0.0) || !std::isfinite(row[i])) {
      std::ostringstream msg;
      msg << where << ": negative or non-finite entry " << row[i] << " at index " << i;
      throw ValidationError(msg.str());
    }
  }
  const double deviation = row.sum() - 1.0;
  if (std::abs(deviation) > tol) {
    std::ostringstream msg;
    msg << where << ": sums to " << row.sum() << " (deviation " << deviation << ")";
    throw ValidationError(msg.str());
  }
}

// Max over actions of q at every state.
Vector state_max(const Table& q) { return q.rowwise().maxCoeff(); }

// Reward and transition matrix of the state chain induced by pi.
void induced_chain(const TabularMDP& mdp, const Policy& pi, Matrix& chain, Vector& reward) {
  const int S = mdp.n_states;
  chain = Matrix::Zero(S, S);
  reward = Vector::Zero(S);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double p = pi.probs(s, a);
      if (p == 0.0) continue;
      chain.row(s) += p * mdp.transition.row(mdp.pair(s, a));
      reward[s] += p * mdp.reward(s, a);
    }
  }
}

}  // namespace

Policy Policy::uniform(int n_states, int n_actions) {
  return {Matrix::Constant(n_states, n_actions, 1.0 / n_actions)};
}

Policy Policy::deterministic(const std::vector<int>& actions, int n_actions) {
  Policy pi{Matrix::Zero(static_cast<Eigen::Index>(actions.size()), n_actions)};
  for (std::size_t s = 0; s < actions.size(); ++s) {
    pi.probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  }
  return pi;
}

bool Policy::is_deterministic() const {
  for (Eigen::Index s = 0; s < probs.rows(); ++s) {
    if (probs.row(s).maxCoeff() != 1.0) return false;
  }
  return true;
}

int Policy::mode(int s) const {
  Eigen::Index best = 0;
  probs.row(s).maxCoeff(&best);
  return static_cast<int>(best);
}

TabularMDP validate_mdp(TabularMDP mdp) {
  if (mdp.n_states <= 0 || mdp.n_actions <= 0) {
    throw ValidationError("n_states and n_actions must be positive");
  }
  if (mdp.transition.rows() != mdp.n_pairs() || mdp.transition.cols() != mdp.n_states) {
    throw ValidationError("transition must have n_states*n_actions rows and n_states columns");
  }
  if (mdp.reward.rows() != mdp.n_states || mdp.reward.cols() != mdp.n_actions) {
    throw ValidationError("reward must be n_states x n_actions");
  }
  if (mdp.initial_dist.size() != mdp.n_states) {
    throw ValidationError("initial_dist must have n_states entries");
  }
  if (!(mdp.gamma > 0.0 && mdp.gamma < 1.0)) {
    throw ValidationError("gamma must lie in (0, 1), got " + std::to_string(mdp.gamma));
  }
  if (!(mdp.r_max >= 0.0) || !std::isfinite(mdp.r_max)) {
    throw ValidationError("r_max must be finite and nonnegative");
  }
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      std::ostringstream where;
      where << "transition row (s=" << s << ", a=" << a << ")";
      check_probability_row(mdp.transition.row(mdp.pair(s, a)).transpose(),
                            kProbabilityTolerance, where.str());
    }
  }
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double r = mdp.reward(s, a);
      if (!(r >= 0.0 && r <= mdp.r_max)) {
        std::ostringstream msg;
        msg << "reward out of [0, R_max] at (s=" << s << ", a=" << a << "): " << r
            << " with R_max = " << mdp.r_max;
        throw ValidationError(msg.str());
      }
    }
  }
  check_probability_row(mdp.initial_dist, kProbabilityTolerance, "initial_dist");
  return mdp;
}

void validate_policy(const Policy& pi, int n_states, int n_actions) {
  if (pi.probs.rows() != n_states || pi.probs.cols() != n_actions) {
    throw ValidationError("policy must be n_states x n_actions");
  }
  for (int s = 0; s < n_states; ++s) {
    check_probability_row(pi.probs.row(s).transpose(), kProbabilityTolerance,
                          "policy row s=" + std::to_string(s));
  }
}

void validate_policy(const NonStationaryPolicy& pi, int n_states, int n_actions) {
  for (const auto& step : pi.prefix) validate_policy(step, n_states, n_actions);
  validate_policy(pi.tail, n_states, n_actions);
}

std::uint64_t fingerprint(const TabularMDP& mdp) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      h ^= (word >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  auto feed_double = [&feed](double x) { feed(std::bit_cast<std::uint64_t>(x)); };
  feed(static_cast<std::uint64_t>(mdp.n_states));
  feed(static_cast<std::uint64_t>(mdp.n_actions));
  for (Eigen::Index i = 0; i < mdp.transition.rows(); ++i)
    for (Eigen::Index j = 0; j < mdp.transition.cols(); ++j) feed_double(mdp.transition(i, j));
  for (Eigen::Index i = 0; i < mdp.reward.rows(); ++i)
    for (Eigen::Index j = 0; j < mdp.reward.cols(); ++j) feed_double(mdp.reward(i, j));
  feed_double(mdp.gamma);
  for (Eigen::Index i = 0; i < mdp.initial_dist.size(); ++i) feed_double(mdp.initial_dist[i]);
  feed_double(mdp.r_max);
  return h;
}

Table bellman_optimality(const TabularMDP& mdp, const Table& q) {
  const Vector next_value = state_max(q);
  const Vector expected = mdp.transition * next_value;  // indexed by pair
  Table out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      out(s, a) = mdp.reward(s, a) + mdp.gamma * expected[mdp.pair(s, a)];
  return out;
}

Vector action_average(const Table& q, const Policy& pi) {
  return q.cwiseProduct(pi.probs).rowwise().sum();
}

ValueIterationResult value_iteration(const TabularMDP& mdp, double tol) {
  if (!(tol > 0.0)) throw ValidationError("value_iteration: tol must be positive");
  // ||q - Q*|| <= ||q - T*q|| / (1 - gamma); the second term keeps the
  // residual target at or below tol (1 - gamma) / (2 gamma) as well.
  const double target = std::min(tol * (1.0 - mdp.gamma),
                                 tol * (1.0 - mdp.gamma) / (2.0 * mdp.gamma));
  ValueIterationResult result{{Table::Zero(mdp.n_states, mdp.n_actions)}, 0, 0.0};
  for (;;) {
    Table next = bellman_optimality(mdp, result.q.values);
    result.residual = (next - result.q.values).cwiseAbs().maxCoeff();
    if (result.residual <= target) break;
    result.q.values = std::move(next);
    ++result.iterations;
  }
  return result;
}

QFunction policy_q_values(const TabularMDP& mdp, const Policy& pi) {
  // Q = R + gamma P V with V = Q(., pi), i.e. (I - gamma P_pi*) Q = R on S x A.
  const Eigen::Index n = mdp.n_pairs();
  Matrix system = Matrix::Identity(n, n);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const Eigen::Index row = mdp.pair(s, a);
      for (int next = 0; next < mdp.n_states; ++next) {
        const double p = mdp.transition(row, next);
        if (p == 0.0) continue;
        for (int b = 0; b < mdp.n_actions; ++b) {
          system(row, mdp.pair(next, b)) -= mdp.gamma * p * pi.probs(next, b);
        }
      }
    }
  }
  Vector rhs(n);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) rhs[mdp.pair(s, a)] = mdp.reward(s, a);
  const Vector flat = system.partialPivLu().solve(rhs);
  Table q(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) q(s, a) = flat[mdp.pair(s, a)];
  return {q};
}

Vector policy_state_values(const TabularMDP& mdp, const Policy& pi) {
  Matrix chain;
  Vector reward;
  induced_chain(mdp, pi, chain, reward);
  const Matrix system = Matrix::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * chain;
  return system.partialPivLu().solve(reward);
}

double expected_return(const TabularMDP& mdp, const Policy& pi) {
  return mdp.initial_dist.dot(action_average(policy_q_values(mdp, pi).values, pi));
}

double expected_return(const TabularMDP& mdp, const NonStationaryPolicy& pi) {
  Vector dist = mdp.initial_dist;
  double total = 0.0;
  double discount = 1.0;
  for (std::size_t t = 0; t < pi.horizon(); ++t) {
    Matrix chain;
    Vector reward;
    induced_chain(mdp, pi.prefix[t], chain, reward);
    total += discount * dist.dot(reward);
    dist = chain.transpose() * dist;
    discount *= mdp.gamma;
  }
  total += discount * dist.dot(policy_state_values(mdp, pi.tail));
  return total;
}

double partial_return(const TabularMDP& mdp, const NonStationaryPolicy& pi,
                      std::size_t last_step) {
  Vector dist = mdp.initial_dist;
  double total = 0.0;
  double discount = 1.0;
  for (std::size_t t = 0; t <= last_step; ++t) {
    Matrix chain;
    Vector reward;
    induced_chain(mdp, pi.at(t), chain, reward);
    total += discount * dist.dot(reward);
    dist = chain.transpose() * dist;
    discount *= mdp.gamma;
  }
  return total;
}

Policy greedy_policy(const QFunction& q, double tie_tol) {
  const auto S = q.values.rows();
  std::vector<int> actions(static_cast<std::size_t>(S), 0);
  for (Eigen::Index s = 0; s < S; ++s) {
    const double best = q.values.row(s).maxCoeff();
    const double slack = tie_tol * std::max(1.0, std::abs(best));
    for (Eigen::Index a = 0; a < q.values.cols(); ++a) {
      if (q.values(s, a) >= best - slack) {
        actions[static_cast<std::size_t>(s)] = static_cast<int>(a);
        break;
      }
    }
  }
  return Policy::deterministic(actions, static_cast<int>(q.values.cols()));
}

OptimalSolution solve_optimal(const TabularMDP& mdp) {
  const double tol = 1e-8 * std::max(1.0, mdp.v_max());
  Policy pi = greedy_policy(value_iteration(mdp, tol).q);
  QFunction q = policy_q_values(mdp, pi);
  // Policy iteration from the value-iteration greedy policy; usually one or
  // two sweeps.
  for (int sweep = 0; sweep < 1000; ++sweep) {
    Policy next = greedy_policy(q);
    if (next == pi) break;
    pi = std::move(next);
    q = policy_q_values(mdp, pi);
  }
  OptimalSolution out;
  out.q_star = std::move(q);
  out.pi_star_e = std::move(pi);
  out.v_star = action_average(out.q_star.values, out.pi_star_e);
  out.j_star = mdp.initial_dist.dot(out.v_star);
  return out;
}

PerformanceDifference performance_difference(const TabularMDP& mdp, const Policy& pi1,
                                             const Policy& pi2) {
  PerformanceDifference out;
  out.lhs = (1.0 - mdp.gamma) * (expected_return(mdp, pi1) - expected_return(mdp, pi2));

  const SADistribution occ = occupancy_measure(mdp, pi1, StateDistribution{mdp.initial_dist});
  const Vector mu = state_marginal(occ.weights, mdp.n_states, mdp.n_actions);
  const Table q2 = policy_q_values(mdp, pi2).values;
  out.rhs = mu.dot(action_average(q2, pi1) - action_average(q2, pi2));
  return out;
}

}  // namespace vopr
