#pragma once

#include <cstddef>
#include <vector>

#include "vopr/dataset.hpp"
#include "vopr/function_classes.hpp"
#include "vopr/mdp.hpp"
#include "vopr/occupancy.hpp"

namespace vopr {

/// Empirical minimax loss
///
///   L^(d, q, w) = 0.5 E_d[q^2] + (1/N) sum_D w(s,a) [gamma max q(s', .) + r - q(s,a)].
///
/// The first term is an exact expectation under the known d.
double empirical_loss(const Dataset& ds, double gamma, const SADistribution& d, const Table& q,
                      const Table& w);

/// Population counterpart of empirical_loss: the second term is an exact
/// expectation over (s,a) ~ d_data and s' ~ P(.|s,a).
double population_loss(const TabularMDP& mdp, const SADistribution& d,
                       const SADistribution& d_data, const Table& q, const Table& w);

/// Argmin over rows of the row maxima of a |Q| x |W| loss table.
struct MinimaxChoice {
  std::size_t q_index = 0;
  std::vector<std::size_t> row_argmax;  ///< best response w for each q
  double value = 0.0;                   ///< min over rows of the row max
};

/// Ties in both the max and the min go to the lowest index (relative
/// tolerance 1e-12).
MinimaxChoice minimax_argmin(const Matrix& loss_table);

struct QSolve {
  QFunction q_hat;
  Matrix loss_table;
  MinimaxChoice choice;
};

/// q^ = argmin_{q in Q} max_{w in W} L^(d_c, q, w) by full enumeration.
QSolve solve_q(const Dataset& ds, double gamma, const SADistribution& d_c,
               const FiniteFunctionClass& q_class, const FiniteFunctionClass& w_class);

/// Same argmin with the population loss in place of the empirical one.
QSolve solve_q_population(const TabularMDP& mdp, const SADistribution& d_c,
                          const SADistribution& d_data, const FiniteFunctionClass& q_class,
                          const FiniteFunctionClass& w_class);

/// pi_beta(a|s) = pi_c(a|s) beta(s,a) / sum_a' pi_c(a'|s) beta(s,a'); pi_c at
/// states whose normalizer vanishes.
Policy ratio_policy(const Policy& pi_c, const Table& beta);

struct PolicyExtraction {
  std::size_t beta_index = 0;
  Table beta_hat;
  Policy pi_hat;
  Vector objective;  ///< E_{mu_c}[q^(s, pi_beta)] per member of B
};

/// beta^ = argmax_{beta in B} E_{mu_c}[q^(s, pi_beta)], lowest index on ties.
PolicyExtraction extract_policy(const QFunction& q_hat, const StateDistribution& mu_c,
                                const Policy& pi_c, const FiniteFunctionClass& b_class);

/// U_W V_max sqrt(2 log(2 |Q| |W| / delta) / N).
double epsilon_stat(double u_w, double v_max, std::size_t size_q, std::size_t size_w,
                    double delta, std::size_t n);

/// 4 C_c U_B sqrt(eps_stat) / (1 - gamma).
double suboptimality_bound(double c_c, double u_b, double eps_stat, double gamma);

/// Everything a caller needs from one run of the two-stage procedure.
struct SolveReport {
  QFunction q_hat;
  Table beta_hat;
  Policy pi_hat;
  Matrix loss_table;
  std::size_t q_index = 0;
  std::size_t w_index = 0;  ///< best response to q^
  std::size_t beta_index = 0;
  Vector beta_objective;
  double epsilon_stat = 0.0;
  double bound = 0.0;
};

struct VoprInputs {
  const Dataset& dataset;
  double gamma;
  double v_max;
  const SADistribution& d_c;
  const StateDistribution& mu_c;
  const Policy& pi_c;
  const FiniteFunctionClass& q_class;
  const FiniteFunctionClass& w_class;
  const FiniteFunctionClass& b_class;
  double delta;
  double c_c;  ///< concentrability coefficient used in the reported bound
};

SolveReport run_vopr(const VoprInputs& in);

/// Lower bound on L(d, q, w) - L(d, Q*, w) for nonnegative w:
///
///   0.5 <d, q^2 - Q*^2> + <(gamma P_{pi*_e} - I)(d_data o w), q - Q*>.
double loss_difference_lower_bound(const TabularMDP& mdp, const OptimalSolution& opt,
                                   const SADistribution& d, const SADistribution& d_data,
                                   const Table& q, const Table& w);

}  // namespace vopr
