#include "vopr/solver.hpp"

#include <cmath>

#include "vopr/errors.hpp"

namespace vopr {

namespace {

// Relative slack under which two losses or objectives count as equal.
constexpr double kLossTieTolerance = 1e-12;

bool strictly_greater(double a, double b) {
  return a > b + kLossTieTolerance * std::max(1.0, std::abs(b));
}

double half_second_moment(const SADistribution& d, const Table& q) {
  double total = 0.0;
  const auto A = q.cols();
  for (Eigen::Index s = 0; s < q.rows(); ++s)
    for (Eigen::Index a = 0; a < A; ++a) total += d.weights[s * A + a] * q(s, a) * q(s, a);
  return 0.5 * total;
}

// Sum over tuples with each (s, a) of gamma max q(s', .) + r - q(s, a).
Table aggregated_residuals(const Dataset& ds, double gamma, const Table& q) {
  const Vector next_max = q.rowwise().maxCoeff();
  Table out = Table::Zero(q.rows(), q.cols());
  for (const auto& t : ds.tuples) out(t.s, t.a) += gamma * next_max[t.s_next] + t.r - q(t.s, t.a);
  return out;
}

// Expected Bellman residual E_{s'}[gamma max q(s', .)] + R(s, a) - q(s, a).
Table expected_residuals(const TabularMDP& mdp, const Table& q) {
  return bellman_optimality(mdp, q) - q;
}

double weighted_sum(const SADistribution& d, const Table& w, const Table& g) {
  double total = 0.0;
  const auto A = g.cols();
  for (Eigen::Index s = 0; s < g.rows(); ++s)
    for (Eigen::Index a = 0; a < A; ++a) total += d.weights[s * A + a] * w(s, a) * g(s, a);
  return total;
}

void require_nonempty(const FiniteFunctionClass& cls, const char* name) {
  if (cls.members.empty()) throw ValidationError(std::string(name) + " class is empty");
}

}  // namespace

double empirical_loss(const Dataset& ds, double gamma, const SADistribution& d, const Table& q,
                      const Table& w) {
  if (ds.tuples.empty()) throw ValidationError("empirical_loss: empty dataset");
  const Vector next_max = q.rowwise().maxCoeff();
  double sum = 0.0;
  for (const auto& t : ds.tuples) {
    sum += w(t.s, t.a) * (gamma * next_max[t.s_next] + t.r - q(t.s, t.a));
  }
  return half_second_moment(d, q) + sum / static_cast<double>(ds.tuples.size());
}

double population_loss(const TabularMDP& mdp, const SADistribution& d,
                       const SADistribution& d_data, const Table& q, const Table& w) {
  return half_second_moment(d, q) + weighted_sum(d_data, w, expected_residuals(mdp, q));
}

MinimaxChoice minimax_argmin(const Matrix& loss_table) {
  MinimaxChoice out;
  const auto rows = loss_table.rows();
  const auto cols = loss_table.cols();
  out.row_argmax.assign(static_cast<std::size_t>(rows), 0);
  for (Eigen::Index i = 0; i < rows; ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < cols; ++j) {
      if (strictly_greater(loss_table(i, j), loss_table(i, best))) best = j;
    }
    out.row_argmax[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
    const double row_max = loss_table(i, best);
    if (i == 0 || strictly_greater(out.value, row_max)) {
      out.q_index = static_cast<std::size_t>(i);
      out.value = row_max;
    }
  }
  return out;
}

QSolve solve_q(const Dataset& ds, double gamma, const SADistribution& d_c,
               const FiniteFunctionClass& q_class, const FiniteFunctionClass& w_class) {
  require_nonempty(q_class, "Q");
  require_nonempty(w_class, "W");
  if (ds.tuples.empty()) throw ValidationError("solve_q: empty dataset");
  const double inv_n = 1.0 / static_cast<double>(ds.tuples.size());
  // The empirical term is linear in w, so each q needs one pass over the data.
  const SADistribution unit{Vector::Ones(d_c.weights.size())};
  Matrix table(q_class.size(), w_class.size());
  for (std::size_t i = 0; i < q_class.size(); ++i) {
    const Table& q = q_class.members[i];
    const double quad = half_second_moment(d_c, q);
    const Table g = aggregated_residuals(ds, gamma, q);
    for (std::size_t j = 0; j < w_class.size(); ++j) {
      table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          quad + inv_n * weighted_sum(unit, w_class.members[j], g);
    }
  }
  QSolve out;
  out.choice = minimax_argmin(table);
  out.q_hat = {q_class.members[out.choice.q_index]};
  out.loss_table = std::move(table);
  return out;
}

QSolve solve_q_population(const TabularMDP& mdp, const SADistribution& d_c,
                          const SADistribution& d_data, const FiniteFunctionClass& q_class,
                          const FiniteFunctionClass& w_class) {
  require_nonempty(q_class, "Q");
  require_nonempty(w_class, "W");
  Matrix table(q_class.size(), w_class.size());
  for (std::size_t i = 0; i < q_class.size(); ++i)
    for (std::size_t j = 0; j < w_class.size(); ++j)
      table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          population_loss(mdp, d_c, d_data, q_class.members[i], w_class.members[j]);
  QSolve out;
  out.choice = minimax_argmin(table);
  out.q_hat = {q_class.members[out.choice.q_index]};
  out.loss_table = std::move(table);
  return out;
}

Policy ratio_policy(const Policy& pi_c, const Table& beta) {
  Policy out = pi_c;
  const Table weighted = pi_c.probs.cwiseProduct(beta);
  for (Eigen::Index s = 0; s < weighted.rows(); ++s) {
    const double norm = weighted.row(s).sum();
    if (norm > 0.0) out.probs.row(s) = weighted.row(s) / norm;
  }
  return out;
}

PolicyExtraction extract_policy(const QFunction& q_hat, const StateDistribution& mu_c,
                                const Policy& pi_c, const FiniteFunctionClass& b_class) {
  require_nonempty(b_class, "B");
  PolicyExtraction out;
  out.objective.resize(static_cast<Eigen::Index>(b_class.size()));
  for (std::size_t k = 0; k < b_class.size(); ++k) {
    const Policy pi = ratio_policy(pi_c, b_class.members[k]);
    out.objective[static_cast<Eigen::Index>(k)] =
        mu_c.weights.dot(action_average(q_hat.values, pi));
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < b_class.size(); ++k) {
    if (strictly_greater(out.objective[static_cast<Eigen::Index>(k)],
                         out.objective[static_cast<Eigen::Index>(best)])) {
      best = k;
    }
  }
  out.beta_index = best;
  out.beta_hat = b_class.members[best];
  out.pi_hat = ratio_policy(pi_c, out.beta_hat);
  return out;
}

double epsilon_stat(double u_w, double v_max, std::size_t size_q, std::size_t size_w,
                    double delta, std::size_t n) {
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must lie in (0, 1)");
  if (n == 0 || size_q == 0 || size_w == 0) {
    throw ValidationError("epsilon_stat: sizes and n must be positive");
  }
  const double classes = static_cast<double>(size_q) * static_cast<double>(size_w);
  return u_w * v_max * std::sqrt(2.0 * std::log(2.0 * classes / delta) / static_cast<double>(n));
}

double suboptimality_bound(double c_c, double u_b, double eps_stat, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0, 1)");
  if (eps_stat == 0.0) return 0.0;
  return 4.0 * c_c * u_b * std::sqrt(eps_stat) / (1.0 - gamma);
}

SolveReport run_vopr(const VoprInputs& in) {
  QSolve q = solve_q(in.dataset, in.gamma, in.d_c, in.q_class, in.w_class);
  PolicyExtraction pol = extract_policy(q.q_hat, in.mu_c, in.pi_c, in.b_class);

  SolveReport out;
  out.q_index = q.choice.q_index;
  out.w_index = q.choice.row_argmax[q.choice.q_index];
  out.q_hat = std::move(q.q_hat);
  out.loss_table = std::move(q.loss_table);
  out.beta_index = pol.beta_index;
  out.beta_hat = std::move(pol.beta_hat);
  out.pi_hat = std::move(pol.pi_hat);
  out.beta_objective = std::move(pol.objective);
  out.epsilon_stat = epsilon_stat(in.w_class.bound, in.v_max, in.q_class.size(),
                                  in.w_class.size(), in.delta, in.dataset.size());
  out.bound = suboptimality_bound(in.c_c, in.b_class.bound, out.epsilon_stat, in.gamma);
  return out;
}

double loss_difference_lower_bound(const TabularMDP& mdp, const OptimalSolution& opt,
                                   const SADistribution& d, const SADistribution& d_data,
                                   const Table& q, const Table& w) {
  const Table& q_star = opt.q_star.values;
  const Table diff = q - q_star;
  double quad = 0.0;
  const auto A = q.cols();
  for (Eigen::Index s = 0; s < q.rows(); ++s)
    for (Eigen::Index a = 0; a < A; ++a)
      quad += d.weights[s * A + a] * (q(s, a) * q(s, a) - q_star(s, a) * q_star(s, a));

  Vector reweighted(d_data.weights.size());
  for (Eigen::Index s = 0; s < w.rows(); ++s)
    for (Eigen::Index a = 0; a < A; ++a) reweighted[s * A + a] = d_data.weights[s * A + a] * w(s, a);
  const Vector pushed = mdp.gamma * apply_transition(mdp, opt.pi_star_e, reweighted) - reweighted;

  double linear = 0.0;
  for (Eigen::Index s = 0; s < q.rows(); ++s)
    for (Eigen::Index a = 0; a < A; ++a) linear += pushed[s * A + a] * diff(s, a);
  return 0.5 * quad + linear;
}

}  // namespace vopr
