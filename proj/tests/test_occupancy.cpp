#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <limits>

#include "support.hpp"
#include "vopr/errors.hpp"
#include "vopr/occupancy.hpp"

using namespace vopr;

namespace {

Vector random_sa(Rng& rng, const TabularMDP& m, double zero_prob = 0.3) {
  return gen::simplex(rng, static_cast<int>(m.n_pairs()), zero_prob);
}

}  // namespace

TEST_CASE("distribution validation") {
  CHECK_NOTHROW(validate_distribution(uniform_states(4), 4));
  CHECK_THROWS_AS(validate_distribution(StateDistribution{Vector::Constant(3, 0.3)}, 3),
                  ValidationError);
  Vector neg(2);
  neg << 1.5, -0.5;
  CHECK_THROWS_AS(validate_distribution(StateDistribution{neg}, 2), ValidationError);
  CHECK_THROWS_AS(validate_distribution(uniform_sa(2, 2), 3), ValidationError);
}

TEST_CASE("transition operator matches the matrix-free application") {
  Rng rng(21);
  for (int k = 0; k < 50; ++k) {
    const TabularMDP m = gen::mdp(rng);
    const Policy pi = gen::policy(rng, m.n_states, m.n_actions, 0.3);
    const Vector d = random_sa(rng, m);
    const Vector via_matrix = transition_operator(m, pi) * d;
    CHECK((via_matrix - apply_transition(m, pi, d)).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("adjoint identity <P d, q> = <d, P* q>") {
  Rng rng(22);
  for (int k = 0; k < 100; ++k) {
    const TabularMDP m = gen::mdp(rng);
    const Policy pi = gen::policy(rng, m.n_states, m.n_actions, 0.3);
    const Vector d = random_sa(rng, m);
    Table q(m.n_states, m.n_actions);
    for (int s = 0; s < m.n_states; ++s)
      for (int a = 0; a < m.n_actions; ++a) q(s, a) = rng.uniform() * 10.0;
    const Vector pd = apply_transition(m, pi, d);
    const Table adj = apply_adjoint(m, pi, q);
    double lhs = 0.0, rhs = 0.0;
    for (int s = 0; s < m.n_states; ++s)
      for (int a = 0; a < m.n_actions; ++a) {
        lhs += pd[m.pair(s, a)] * q(s, a);
        rhs += d[m.pair(s, a)] * adj(s, a);
      }
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("transition preserves mass and nonnegativity") {
  Rng rng(23);
  for (int k = 0; k < 100; ++k) {
    const TabularMDP m = gen::mdp(rng);
    const Policy pi = gen::policy(rng, m.n_states, m.n_actions, 0.3);
    const Vector d = random_sa(rng, m);
    const Vector pd = apply_transition(m, pi, d);
    CHECK(pd.minCoeff() >= 0.0);
    CHECK(std::abs(pd.sum() - d.sum()) <= 4 * std::numeric_limits<double>::epsilon());
  }
}

TEST_CASE("transition is linear") {
  Rng rng(24);
  for (int k = 0; k < 100; ++k) {
    const TabularMDP m = gen::mdp(rng);
    const Policy pi = gen::policy(rng, m.n_states, m.n_actions);
    const Vector x = random_sa(rng, m), y = random_sa(rng, m);
    const double a = rng.uniform() * 4 - 2, b = rng.uniform() * 4 - 2;
    const Vector lhs = apply_transition(m, pi, a * x + b * y);
    const Vector rhs = a * apply_transition(m, pi, x) + b * apply_transition(m, pi, y);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("occupancy matches a long power series") {
  Rng rng(25);
  for (int k = 0; k < 50; ++k) {
    const TabularMDP m = gen::mdp(rng);
    const Policy pi = gen::policy(rng, m.n_states, m.n_actions, 0.3);
    const Vector start = random_sa(rng, m);
    const SADistribution d = occupancy_measure(m, pi, SADistribution{start});
    CHECK((d.weights - oracle::series_occupancy(m, pi, start)).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(d.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.weights.minCoeff() >= -1e-15);
  }
}

TEST_CASE("occupancy of a one-state chain is the start") {
  TabularMDP m = build_counterexample(0.5);
  const Policy pi = Policy::uniform(4, 2);
  StateDistribution start{Vector::Unit(4, 1)};
  const SADistribution d = occupancy_measure(m, pi, start);
  CHECK(d.weights[m.pair(1, 0)] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(d.weights[m.pair(1, 1)] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("Neumann series converges to the direct solve") {
  Rng rng(26);
  for (int k = 0; k < 20; ++k) {
    const TabularMDP m = gen::mdp(rng, 5, 3, 0.5, 0.8);
    const Policy pi = gen::policy(rng, m.n_states, m.n_actions);
    const Vector start = random_sa(rng, m);
    const Vector direct = occupancy_measure(m, pi, SADistribution{start}).weights;
    const Vector series = neumann_occupancy(m, pi, start, 200);
    // Truncation leaves at most gamma^201 of the mass out.
    CHECK((direct - series).lpNorm<1>() <= std::pow(m.gamma, 201) + 1e-12);
  }
}

TEST_CASE("truncated occupancy pieces add up") {
  Rng rng(27);
  for (int k = 0; k < 30; ++k) {
    const TabularMDP m = gen::mdp(rng);
    NonStationaryPolicy ns;
    for (int t = 0; t < 3; ++t) ns.prefix.push_back(gen::policy(rng, m.n_states, m.n_actions));
    ns.tail = gen::policy(rng, m.n_states, m.n_actions);
    const StateDistribution mu0{m.initial_dist};
    const Vector head = truncated_occupancy(m, ns, mu0, 0, 4);
    const Vector rest = truncated_occupancy(m, ns, mu0, 5, std::nullopt);
    const Vector whole = occupancy_measure(m, ns, mu0).weights;
    CHECK((head + rest - whole).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(whole.sum() == doctest::Approx(1.0).epsilon(1e-12));

    const auto steps = step_distributions(m, ns, mu0, 4);
    Vector manual = Vector::Zero(m.n_pairs());
    for (std::size_t t = 2; t <= 4; ++t)
      manual += (1 - m.gamma) * std::pow(m.gamma, static_cast<double>(t)) * steps[t];
    CHECK((manual - truncated_occupancy(m, ns, mu0, 2, 4)).cwiseAbs().maxCoeff() <= 1e-14);
  }
  const TabularMDP m = build_counterexample(0.9);
  CHECK_THROWS_AS(truncated_occupancy(m, NonStationaryPolicy::stationary(Policy::uniform(4, 2)),
                                      StateDistribution{m.initial_dist}, 3, 2),
                  ValidationError);
}

TEST_CASE("stationary non-stationary occupancy equals the stationary one") {
  Rng rng(28);
  const TabularMDP m = gen::mdp(rng);
  const Policy pi = gen::policy(rng, m.n_states, m.n_actions);
  const StateDistribution mu0{m.initial_dist};
  const Vector a = occupancy_measure(m, pi, mu0).weights;
  const Vector b = occupancy_measure(m, NonStationaryPolicy{{pi, pi}, pi}, mu0).weights;
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("density ratio conventions") {
  Vector num(4), den(4);
  num << 0.0, 0.5, 0.2, 1e-14;
  den << 0.0, 0.0, 0.4, 0.0;
  const Vector r = density_ratio(num, den);
  CHECK(r[0] == 1.0);
  CHECK(std::isinf(r[1]));
  CHECK(r[2] == doctest::Approx(0.5));
  CHECK(r[3] == 1.0);
  const RatioSup sup = sup_ratio(num, den);
  CHECK(std::isinf(sup.value));
  CHECK(sup.argmax == 1);

  Vector same = Vector::Constant(3, 1.0 / 3);
  CHECK(sup_ratio(same, same).value == doctest::Approx(1.0));
  CHECK_THROWS_AS(density_ratio(Vector::Ones(2), Vector::Ones(3)), ValidationError);
}

TEST_CASE("conditional policy and compose round-trip") {
  Rng rng(29);
  const StateDistribution mu{gen::simplex(rng, 4, 0.4)};
  const Policy pi = gen::policy(rng, 4, 3);
  const SADistribution d = compose(mu, pi);
  CHECK((state_marginal(d.weights, 4, 3) - mu.weights).cwiseAbs().maxCoeff() <= 1e-15);
  const Policy back = conditional_policy(d, 4, 3, Policy::uniform(4, 3));
  for (int s = 0; s < 4; ++s) {
    if (mu.weights[s] > 0) {
      CHECK((back.probs.row(s) - pi.probs.row(s)).cwiseAbs().maxCoeff() <= 1e-15);
    } else {
      CHECK(back.probs(s, 0) == doctest::Approx(1.0 / 3));
    }
  }
}
