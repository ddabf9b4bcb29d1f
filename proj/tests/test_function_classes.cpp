#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"
#include "vopr/errors.hpp"
#include "vopr/function_classes.hpp"

using namespace vopr;

namespace {

TabularMDP one_state() {
  TabularMDP m;
  m.n_states = 1;
  m.n_actions = 1;
  m.transition = Matrix::Ones(1, 1);
  m.reward = Table::Ones(1, 1);
  m.gamma = 0.9;
  m.initial_dist = Vector::Ones(1);
  m.r_max = 1.0;
  return m;
}

// (I - gamma P_pi*) (w o d_data) - d_c o Q*, computed with the explicit operator.
double identity_residual(const TabularMDP& m, const OptimalSolution& opt, const Table& w,
                         const SADistribution& d_c, const SADistribution& d_data) {
  Vector lhs(m.n_pairs()), rhs(m.n_pairs());
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) {
      lhs[m.pair(s, a)] = w(s, a) * d_data.weights[m.pair(s, a)];
      rhs[m.pair(s, a)] = d_c.weights[m.pair(s, a)] * opt.q_star.values(s, a);
    }
  const Vector r = lhs - m.gamma * apply_transition(m, opt.pi_star_e, lhs) - rhs;
  return r.cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("w* on the one-state chain") {
  const TabularMDP m = one_state();
  const SADistribution one{Vector::Ones(1)};
  const Table w = optimal_w(m, one, one);
  CHECK(w(0, 0) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("w* with zero rewards") {
  Rng rng(31);
  TabularMDP m = gen::mdp(rng);
  m.reward.setZero();
  Vector dd = gen::simplex(rng, static_cast<int>(m.n_pairs()));
  dd[0] = 0.0;
  dd /= dd.sum();
  const Table w = optimal_w(m, uniform_sa(m.n_states, m.n_actions), SADistribution{dd});
  CHECK(w(0, 0) == 1.0);
  for (Eigen::Index i = 1; i < dd.size(); ++i) CHECK(w(i / m.n_actions, i % m.n_actions) == 0.0);
}

TEST_CASE("w* needs data support on the covered flow") {
  const TabularMDP m = build_counterexample(0.9);
  // d_c on (0, L) flows to state 2 and 3; data only on states 0 and 1.
  Vector dc = Vector::Zero(8);
  dc[m.pair(0, 0)] = 1.0;
  Vector dd = Vector::Zero(8);
  dd.head(4).setConstant(0.25);
  CHECK_THROWS_AS(optimal_w(m, SADistribution{dc}, SADistribution{dd}), UnrealizableError);
  try {
    optimal_w(m, SADistribution{dc}, SADistribution{dd});
  } catch (const UnrealizableError& e) {
    CHECK(std::string(e.what()).find("unrealizable") != std::string::npos);
  }
}

TEST_CASE("w* satisfies its defining identity on random instances") {
  Rng rng(32);
  for (int k = 0; k < 50; ++k) {
    const TabularMDP m = gen::mdp(rng);
    const OptimalSolution opt = solve_optimal(m);
    const SADistribution dc{gen::simplex(rng, static_cast<int>(m.n_pairs()), 0.3)};
    const SADistribution dd{gen::simplex(rng, static_cast<int>(m.n_pairs()))};
    const Table w = optimal_w(m, opt, dc, dd);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(identity_residual(m, opt, w, dc, dd) <= 1e-9 * std::max(1.0, m.v_max()));
  }
}

TEST_CASE("beta* arithmetic") {
  const Policy det = Policy::deterministic({1, 0}, 2);
  const Table b = optimal_beta(det, Policy::uniform(2, 2));
  CHECK(b(0, 0) == 0.0);
  CHECK(b(0, 1) == 2.0);
  CHECK(b(1, 0) == 2.0);

  const Table same = optimal_beta(det, det);
  CHECK(same(0, 1) == 1.0);
  CHECK(same(0, 0) == 1.0);  // 0/0

  try {
    optimal_beta(det, Policy::deterministic({0, 0}, 2));
    FAIL("expected an uncovered policy");
  } catch (const UnrealizableError& e) {
    CHECK(std::string(e.what()) == "policy uncovered at (s=0, a=1)");
  }
}

TEST_CASE("class validation") {
  FiniteFunctionClass q{FunctionKind::Q, {Table::Constant(2, 2, 5.0)}, 4.0};
  CHECK_THROWS_AS(validate_class(q), ValidationError);
  q.bound = 5.0;
  CHECK_NOTHROW(validate_class(q));

  const Policy pi_c = Policy::uniform(2, 2);
  FiniteFunctionClass b{FunctionKind::B, {Table::Ones(2, 2)}, 1.0};
  CHECK_THROWS_AS(validate_class(b), ValidationError);
  CHECK_NOTHROW(validate_class(b, &pi_c));
  b.members[0](1, 0) = 1.5;
  b.bound = 1.5;
  CHECK_THROWS_AS(validate_class(b, &pi_c), ValidationError);
  CHECK(parse_function_kind(to_string(FunctionKind::W)) == FunctionKind::W);
  CHECK_THROWS_AS(parse_function_kind("X"), ValidationError);
}

TEST_CASE("zero distractors give singleton classes") {
  Rng rng(33);
  const TabularMDP m = gen::mdp(rng);
  const OptimalSolution opt = solve_optimal(m);
  const SADistribution d = uniform_sa(m.n_states, m.n_actions);
  const Policy pi_c = Policy::uniform(m.n_states, m.n_actions);
  const RealizableClasses c = build_realizable_classes(m, d, d, pi_c, 0, 7);
  CHECK(c.q.size() == 1);
  CHECK(c.w.size() == 1);
  CHECK(c.b.size() == 1);
  CHECK((c.q.members[0] - opt.q_star.values).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(c.b.members[0] == optimal_beta(opt.pi_star_e, pi_c));
}

TEST_CASE("realizable builds: membership, bounds, realized elements, determinism") {
  Rng rng(34);
  for (int k = 0; k < 40; ++k) {
    const TabularMDP m = gen::mdp(rng);
    const OptimalSolution opt = solve_optimal(m);
    const Policy pi_c = gen::policy(rng, m.n_states, m.n_actions);
    const SADistribution dd = compose(uniform_states(m.n_states), pi_c);
    const SADistribution dc = compose(StateDistribution{gen::simplex(rng, m.n_states, 0.3)}, pi_c);
    const std::uint64_t seed = rng();
    const DistractorOptions opts{5, 6, 7, 0.3};
    const RealizableClasses c = build_realizable_classes(m, opt, dc, dd, pi_c, opts, seed);

    CHECK(c.q.size() == 6);
    CHECK(c.w.size() == 7);
    CHECK(c.b.size() == 8);
    CHECK_NOTHROW(validate_class(c.q));
    CHECK_NOTHROW(validate_class(c.w));
    CHECK_NOTHROW(validate_class(c.b, &pi_c));
    CHECK(c.q.bound == m.v_max());
    CHECK(c.w.bound == max_entry(c.w));
    CHECK(c.b.bound == max_entry(c.b));

    CHECK(c.q.members[c.q_index] == opt.q_star.values);
    CHECK(identity_residual(m, opt, c.w.members[c.w_index], dc, dd) <=
          1e-9 * std::max(1.0, m.v_max()));
    const Table pi_star = pi_c.probs.cwiseProduct(c.b.members[c.b_index]);
    CHECK((pi_star - opt.pi_star_e.probs).cwiseAbs().maxCoeff() <= 1e-12);

    const RealizableClasses again = build_realizable_classes(m, opt, dc, dd, pi_c, opts, seed);
    for (std::size_t i = 0; i < c.q.size(); ++i) CHECK(again.q.members[i] == c.q.members[i]);
    for (std::size_t i = 0; i < c.w.size(); ++i) CHECK(again.w.members[i] == c.w.members[i]);
    for (std::size_t i = 0; i < c.b.size(); ++i) CHECK(again.b.members[i] == c.b.members[i]);
  }
}
