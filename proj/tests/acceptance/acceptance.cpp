// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "support.hpp"
#include "vopr/errors.hpp"
#include "vopr/harness.hpp"

using namespace vopr;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
int g_failed = 0;

void report(const std::string& id, bool pass, const std::string& what) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", id.c_str(), what.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failed;
}

void detail(const std::string& id, bool pass, const std::string& what) {
  std::printf("    %s %s: %s\n", pass ? "ok  " : "bad ", id.c_str(), what.c_str());
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

StateDistribution half_half() {
  Vector mu = Vector::Zero(4);
  mu << 0.5, 0.5, 0.0, 0.0;
  return {mu};
}

// ---------------------------------------------------------------------------

void tie_break_failure() {
  const auto t0 = std::chrono::steady_clock::now();
  const TabularMDP m = build_counterexample(0.9);
  const OptimalSolution opt = solve_optimal(m);
  const Policy pi_hat = adversarial_policy(m, opt.q_star, half_half());
  const ConcentrabilityReport cc = concentrability_cc(m, half_half(), 0.0, {0, 1000, true});
  const AdvantageReport r =
      verify_advantage_to_suboptimality(m, opt, half_half(), pi_hat, 0.0, cc.coefficient, 0);
  const double secs = seconds_since(t0);
  const bool pass = std::abs(r.premise) <= 1e-9 && std::abs(r.gap - 9.0) <= 1e-9 &&
                    std::isinf(cc.coefficient) && cc.witness_index == 2 && secs < 1.0;
  report("1", pass,
         fmt("four-state chain, half/half covering: inner product %.3g, gap %.12g, C_c %g at "
             "state index %ld, %.3fs",
             r.premise, r.gap, cc.coefficient, static_cast<long>(cc.witness_index), secs));
}

void tie_break_repair() {
  const auto t0 = std::chrono::steady_clock::now();
  const TabularMDP m = build_counterexample(0.9);
  const OptimalSolution opt = solve_optimal(m);
  const StateDistribution mu_c = uniform_states(4);
  const ConcentrabilityReport cc = concentrability_cc(m, mu_c, 0.0, {32, 1000000, true});

  std::vector<Policy> candidates;
  for (int code = 0; code < 16; ++code)
    candidates.push_back(Policy::deterministic(
        {code & 1, (code >> 1) & 1, (code >> 2) & 1, (code >> 3) & 1}, 2));
  candidates.push_back(adversarial_policy(m, opt.q_star, mu_c));
  Rng rng(1002);
  for (int k = 0; k < 2000; ++k) candidates.push_back(gen::policy(rng, 4, 2, 0.5));

  std::size_t satisfying = 0;
  double worst = 0.0;
  for (const Policy& p : candidates) {
    const Vector adv = action_average(opt.q_star.values, p) - opt.v_star;
    if (mu_c.weights.dot(adv) < -1e-9) continue;
    ++satisfying;
    worst = std::max(worst, opt.j_star - expected_return(m, p));
  }
  const double secs = seconds_since(t0);
  const bool pass = std::isfinite(cc.coefficient) && satisfying > 0 && worst <= 1e-6 && secs < 10.0;
  report("2", pass,
         fmt("uniform covering, horizon 32: C_c %.6g over %zu policies; %zu of %zu candidates "
             "satisfy the premise, worst gap %.3g, %.2fs",
             cc.coefficient, cc.policy_count, satisfying, candidates.size(), worst, secs));
}

struct RowTally {
  std::size_t rows = 0;
  std::size_t errors = 0;
  std::size_t bound_mdps_ok = 0;
  std::size_t qerr_mdps_ok = 0;
  std::size_t l1_ok = 0;
  std::size_t finite_cd = 0;
  std::size_t ratio_ok = 0;
  double min_bound_frac = 1.0;
  double min_qerr_frac = 1.0;
};

void end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  RowTally t;
  const std::size_t n_mdps = 20, n_seeds = 50;
  for (std::size_t k = 0; k < n_mdps; ++k) {
    Json cfg;
    cfg["mdp"] = {{"kind", "random"}, {"n_states", 5}, {"n_actions", 3}, {"seed", 7000 + k},
                  {"reward_sparsity", 0.3}};
    cfg["classes"] = {{"q_size", 8}, {"w_size", 8}, {"b_size", 8}};
    cfg["delta"] = 0.1;
    cfg["n"] = 10000;
    cfg["seeds"] = {{"start", 1}, {"count", n_seeds}};
    const ExperimentSetup setup = prepare_experiment(parse_experiment_config(cfg));
    std::size_t bound_ok = 0, qerr_ok = 0;
    for (std::uint64_t seed : setup.config.seeds) {
      const ExperimentRow row = run_row(setup, seed, 10000);
      ++t.rows;
      if (!row.error.empty()) {
        ++t.errors;
        continue;
      }
      bound_ok += row.bound_holds;
      qerr_ok += row.q_error_holds;
      t.l1_ok += row.l1_advantage_holds;
      if (std::isfinite(row.c_d)) {
        ++t.finite_cd;
        t.ratio_ok += row.covering_ratio_holds;
      }
    }
    const double bf = static_cast<double>(bound_ok) / n_seeds;
    const double qf = static_cast<double>(qerr_ok) / n_seeds;
    t.min_bound_frac = std::min(t.min_bound_frac, bf);
    t.min_qerr_frac = std::min(t.min_qerr_frac, qf);
    t.bound_mdps_ok += bf >= 0.9;
    t.qerr_mdps_ok += qf >= 0.9;
  }
  const double secs = seconds_since(t0);
  report("3", t.errors == 0 && t.bound_mdps_ok == n_mdps,
         fmt("suboptimality bound: %zu/%zu MDPs at >= 90%% of seeds (lowest %.2f), %zu row "
             "errors, %.1fs",
             t.bound_mdps_ok, n_mdps, t.min_bound_frac, t.errors, secs));
  report("4", t.errors == 0 && t.qerr_mdps_ok == n_mdps,
         fmt("Q error <= 2 sqrt(eps_stat): %zu/%zu MDPs at >= 90%% of seeds (lowest %.2f)",
             t.qerr_mdps_ok, n_mdps, t.min_qerr_frac));
  report("5", t.errors == 0 && t.l1_ok == t.rows,
         fmt("L1 advantage inequality: %zu/%zu rows", t.l1_ok, t.rows));
  report("10", t.errors == 0 && t.finite_cd > 0 && t.ratio_ok == t.finite_cd,
         fmt("covering ratio <= C_D/(1-gamma): %zu/%zu rows with finite C_D", t.ratio_ok,
             t.finite_cd));
}

void operator_suite() {
  Rng rng(6006);
  const int n = 200;
  double adj_worst = 0.0, cons_worst_ulps = 0.0, neu_worst = 0.0, lin_worst = 0.0;
  double neu_worst_gamma = 0.0;
  int neu_fail = 0;
  for (int k = 0; k < n; ++k) {
    // gamma sweeps [0.5, 0.95]; the last instances sit at the top of the range.
    TabularMDP m = gen::mdp(rng, 6, 4, 0.5, 0.95);
    if (k >= n - 10) m.gamma = 0.95;
    const Policy pi = gen::policy(rng, m.n_states, m.n_actions, 0.3);
    const int sa = static_cast<int>(m.n_pairs());
    const Vector d = gen::simplex(rng, sa, 0.3), e = gen::simplex(rng, sa, 0.3);
    Table q(m.n_states, m.n_actions);
    for (int s = 0; s < m.n_states; ++s)
      for (int a = 0; a < m.n_actions; ++a) q(s, a) = 10.0 * rng.uniform() - 5.0;

    const Vector pd = apply_transition(m, pi, d);
    const Table adj = apply_adjoint(m, pi, q);
    double lhs = 0.0, rhs = 0.0;
    for (int s = 0; s < m.n_states; ++s)
      for (int a = 0; a < m.n_actions; ++a) {
        lhs += pd[m.pair(s, a)] * q(s, a);
        rhs += d[m.pair(s, a)] * adj(s, a);
      }
    adj_worst = std::max(adj_worst, std::abs(lhs - rhs));

    cons_worst_ulps = std::max(cons_worst_ulps, std::abs(pd.lpNorm<1>() - d.lpNorm<1>()) /
                                                    std::numeric_limits<double>::epsilon());

    const Vector direct = occupancy_measure(m, pi, SADistribution{d}).weights;
    const double neu = (neumann_occupancy(m, pi, d, 200) - direct).lpNorm<1>();
    if (neu > 1e-8) ++neu_fail;
    if (neu > neu_worst) {
      neu_worst = neu;
      neu_worst_gamma = m.gamma;
    }

    const double a = 4.0 * rng.uniform() - 2.0, b = 4.0 * rng.uniform() - 2.0;
    lin_worst = std::max(lin_worst, (apply_transition(m, pi, a * d + b * e) -
                                     a * pd - b * apply_transition(m, pi, e))
                                        .cwiseAbs()
                                        .maxCoeff());
  }
  const bool adj_ok = adj_worst <= 1e-12;
  // Floating-point sums of nonnegative terms: a few ulps is the exact-arithmetic result.
  const bool cons_ok = cons_worst_ulps <= 4.0;
  const bool neu_ok = neu_fail == 0;
  const bool lin_ok = lin_worst <= 1e-12;
  report("6", adj_ok && cons_ok && neu_ok && lin_ok,
         fmt("operator suite over %d instances (gamma in [0.5, 0.95])", n));
  detail("6a", adj_ok, fmt("adjoint identity, worst |<Pd,q> - <d,P*q>| = %.3g", adj_worst));
  detail("6b", cons_ok, fmt("mass conservation, worst %.1f ulp", cons_worst_ulps));
  detail("6c", neu_ok,
         fmt("200-term Neumann vs direct solve <= 1e-8: %d/%d instances over, worst L1 %.3g at "
             "gamma %.3f (truncation leaves gamma^201 of the mass)",
             neu_fail, n, neu_worst, neu_worst_gamma));
  detail("6d", lin_ok, fmt("linearity, worst %.3g", lin_worst));
}

void performance_difference_suite() {
  Rng rng(7007);
  const int n = 150;
  double pdl_worst = 0.0, tel_worst = 0.0;
  for (int k = 0; k < n; ++k) {
    const TabularMDP m = gen::mdp(rng, 6, 4, 0.5, 0.95);
    const OptimalSolution opt = solve_optimal(m);
    const Policy p1 = gen::policy(rng, m.n_states, m.n_actions, 0.3);
    const Policy p2 = gen::policy(rng, m.n_states, m.n_actions, 0.3);
    const PerformanceDifference pd = performance_difference(m, p1, p2);
    pdl_worst = std::max(pdl_worst, std::abs(pd.lhs - pd.rhs));
    const std::size_t i = static_cast<std::size_t>(rng() % 21);
    const TelescopingSides t = telescoping_identity(m, opt, p1, i);
    tel_worst = std::max(tel_worst, std::abs(t.lhs - t.rhs));
  }
  report("7", pdl_worst <= 1e-8 && tel_worst <= 1e-8,
         fmt("%d instances: performance difference worst %.3g, telescoping (i <= 20) worst %.3g",
             n, pdl_worst, tel_worst));
}

void loss_concentration() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(8008);

  // Mean of the empirical loss over M datasets against the population loss.
  const std::size_t M = 200, N = 500;
  int checked = 0, within = 0;
  double worst_z = 0.0;
  for (int k = 0; k < 5; ++k) {
    const TabularMDP m = gen::mdp(rng, 5, 3, 0.7, 0.95);
    const OptimalSolution opt = solve_optimal(m);
    const StateDistribution mu_data{gen::simplex(rng, m.n_states)};
    const Policy pi_b = gen::policy(rng, m.n_states, m.n_actions);
    const SADistribution d_data = compose(mu_data, pi_b);
    const SADistribution d_c = compose(uniform_states(m.n_states), pi_b);
    const RealizableClasses cls =
        build_realizable_classes(m, opt, d_c, d_data, pi_b, {3, 3, 3, 0.3}, rng());
    const std::pair<std::size_t, std::size_t> pairs[] = {{cls.q_index, cls.w_index}, {1, 2}};
    for (const auto& [qi, wi] : pairs) {
      const Table& q = cls.q.members[qi];
      const Table& w = cls.w.members[wi];
      double sum = 0.0, sq = 0.0;
      for (std::size_t j = 0; j < M; ++j) {
        const double l = empirical_loss(sample_dataset(m, mu_data, pi_b, N, rng()), m.gamma, d_c, q, w);
        sum += l;
        sq += l * l;
      }
      const double mean = sum / M;
      const double var = (sq - M * mean * mean) / (M - 1);
      const double se = std::sqrt(std::max(var, 0.0) / M);
      const double z = std::abs(mean - population_loss(m, d_c, d_data, q, w)) / se;
      worst_z = std::max(worst_z, z);
      ++checked;
      within += z <= 3.0;
    }
  }

  // Sup deviation over Q x W against eps_stat across seeds.
  const double delta = 0.1;
  const std::size_t seeds = 500, n_data = 1000;
  const TabularMDP m = random_mdp(5, 3, 8080, 0.3);
  const OptimalSolution opt = solve_optimal(m);
  const StateDistribution mu_data = uniform_states(5);
  const Policy pi_b = Policy::uniform(5, 3);
  const SADistribution d_data = compose(mu_data, pi_b);
  std::size_t exceed = 0;
  double worst_ratio = 0.0;
  for (std::size_t seed = 0; seed < seeds; ++seed) {
    const RealizableClasses cls =
        build_realizable_classes(m, opt, d_data, d_data, pi_b, {7, 7, 7, 0.3}, derive_seed(seed, 1));
    const Dataset ds = sample_dataset(m, mu_data, pi_b, n_data, derive_seed(seed, 2));
    const QSolve emp = solve_q(ds, m.gamma, d_data, cls.q, cls.w);
    const QSolve pop = solve_q_population(m, d_data, d_data, cls.q, cls.w);
    const double dev = (emp.loss_table - pop.loss_table).cwiseAbs().maxCoeff();
    const double eps = epsilon_stat(cls.w.bound, m.v_max(), cls.q.size(), cls.w.size(), delta, n_data);
    exceed += dev > eps;
    worst_ratio = std::max(worst_ratio, dev / eps);
  }
  const double rate = static_cast<double>(exceed) / seeds;
  report("8", within == checked && rate <= delta,
         fmt("mean loss within 3 SE in %d/%d checks (worst %.2f SE, M=%zu); sup deviation above "
             "eps_stat in %zu/%zu seeds (largest dev/eps %.3f), %.1fs",
             within, checked, worst_z, M, exceed, seeds, worst_ratio, seconds_since(t0)));
}

struct MixtureResult {
  double c_d = 0.0;
  double per_step = 0.0;
  double covering_ratio = 0.0;
};

MixtureResult mixture_check(const Json& cfg) {
  const ExperimentSetup setup = prepare_experiment(parse_experiment_config(cfg));
  std::vector<NonStationaryPolicy> members;
  for (const auto& p : near_optimal_policies(setup.mdp, setup.opt.j_star, setup.config.mixture_eps,
                                             setup.policies))
    members.push_back(p.policy);
  return {setup.c_d.coefficient,
          max_per_step_coefficient(setup.mdp, setup.opt, members, setup.d_data),
          setup.covering_ratio};
}

void mixture_covering_check() {
  const auto t0 = std::chrono::steady_clock::now();
  int ok = 0, total = 0, ratio_ok = 0, finite = 0;
  double worst_margin = -kInf;
  auto tally = [&](const MixtureResult& r, double gamma) {
    ++total;
    ok += r.c_d <= r.per_step + 1e-9;
    if (std::isfinite(r.c_d)) worst_margin = std::max(worst_margin, r.c_d - r.per_step);
    if (std::isfinite(r.c_d)) {
      ++finite;
      ratio_ok += r.covering_ratio <= r.c_d / (1 - gamma) + 1e-9;
    }
  };
  Json cfg;
  cfg["mdp"] = {{"kind", "counterexample"}, {"gamma", 0.9}};
  cfg["covering"] = {{"mode", "mixture"}, {"mixture_eps", 0.0}};
  cfg["horizon"] = 2;
  cfg["n"] = 1;
  cfg["seed"] = 0;
  tally(mixture_check(cfg), 0.9);
  for (int k = 0; k < 10; ++k) {
    cfg["mdp"] = {{"kind", "random"}, {"n_states", 4}, {"n_actions", 2}, {"seed", 9000 + k},
                  {"reward_sparsity", 0.3}};
    cfg["covering"]["mixture_eps"] = 0.5;
    tally(mixture_check(cfg), 0.9);
  }
  report("9", ok == total,
         fmt("mixture covering: C_D <= per-step coefficient in %d/%d MDPs (largest C_D - "
             "per-step %.3g); covering ratio bound %d/%d; %.1fs",
             ok, total, worst_margin, ratio_ok, finite, seconds_since(t0)));
}

template <class F>
void guarded(const char* id, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(id, false, std::string("threw: ") + e.what());
  }
}

}  // namespace

int main() {
  guarded("1", tie_break_failure);
  guarded("2", tie_break_repair);
  guarded("3-5,10", end_to_end);
  guarded("6", operator_suite);
  guarded("7", performance_difference_suite);
  guarded("8", loss_concentration);
  guarded("9", mixture_covering_check);
  std::printf("%d criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
