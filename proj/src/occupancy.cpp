#include "vopr/occupancy.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/LU>

#include "vopr/errors.hpp"

namespace vopr {

namespace {

void check_distribution(const Vector& w, Eigen::Index expected, const char* what) {
  if (w.size() != expected) {
    std::ostringstream msg;
    msg << what << ": expected " << expected << " entries, got " << w.size();
    throw ValidationError(msg.str());
  }
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!(w[i] >= 0.0) || !std::isfinite(w[i])) {
      std::ostringstream msg;
      msg << what << ": negative or non-finite weight " << w[i] << " at index " << i;
      throw ValidationError(msg.str());
    }
  }
  if (std::abs(w.sum() - 1.0) > kDistributionTolerance) {
    std::ostringstream msg;
    msg << what << ": weights sum to " << w.sum();
    throw ValidationError(msg.str());
  }
}

// Sum over (s, a) of P(s'|s,a) d(s,a): the next-state marginal.
Vector next_state_marginal(const TabularMDP& mdp, const Vector& d) {
  return mdp.transition.transpose() * d;
}

Vector spread(const Vector& state_mass, const Policy& pi) {
  const int S = pi.n_states();
  const int A = pi.n_actions();
  Vector out(static_cast<Eigen::Index>(S) * A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) out[static_cast<Eigen::Index>(s) * A + a] = state_mass[s] * pi.probs(s, a);
  return out;
}

Vector solve_occupancy(const TabularMDP& mdp, const Policy& pi, const Vector& start) {
  const Eigen::Index n = mdp.n_pairs();
  const Matrix system = Matrix::Identity(n, n) - mdp.gamma * transition_operator(mdp, pi);
  return system.partialPivLu().solve((1.0 - mdp.gamma) * start);
}

// Shared body of the two step_distributions overloads once d_0 is known.
std::vector<Vector> roll_forward(const TabularMDP& mdp, const NonStationaryPolicy& pi,
                                 Vector d0, std::size_t last) {
  std::vector<Vector> steps;
  steps.reserve(last + 1);
  steps.push_back(std::move(d0));
  for (std::size_t t = 1; t <= last; ++t) {
    steps.push_back(apply_transition(mdp, pi.at(t), steps.back()));
  }
  return steps;
}

Vector truncated_from(const TabularMDP& mdp, const NonStationaryPolicy& pi, const Vector& d0,
                      std::size_t first, std::optional<std::size_t> last) {
  if (last && *last < first) throw ValidationError("truncated_occupancy: requires first <= last");
  const double g = mdp.gamma;
  Vector out = Vector::Zero(mdp.n_pairs());
  Vector d = d0;
  double discount = 1.0;
  // Finite part: explicit steps up to `last`, or up to where the stationary
  // tail takes over (and at least up to `first`).
  const std::size_t stop = last ? *last : std::max(first, pi.horizon());
  std::size_t t = 0;
  for (;; ++t) {
    if (t >= first && (last || t < stop)) out += (1.0 - g) * discount * d;
    if (t == stop) break;
    d = apply_transition(mdp, pi.at(t + 1), d);
    discount *= g;
  }
  if (!last) {
    // Steps stop.. all follow the tail: gamma^stop (1-g)(I - g P_tail)^{-1} d_stop.
    out += discount * solve_occupancy(mdp, pi.tail, d);
  }
  return out;
}

}  // namespace

void validate_distribution(const SADistribution& d, Eigen::Index n_pairs) {
  check_distribution(d.weights, n_pairs, "state-action distribution");
}

void validate_distribution(const StateDistribution& d, Eigen::Index n_states) {
  check_distribution(d.weights, n_states, "state distribution");
}

SADistribution uniform_sa(int n_states, int n_actions) {
  const Eigen::Index n = static_cast<Eigen::Index>(n_states) * n_actions;
  return {Vector::Constant(n, 1.0 / static_cast<double>(n))};
}

StateDistribution uniform_states(int n_states) {
  return {Vector::Constant(n_states, 1.0 / n_states)};
}

SADistribution compose(const StateDistribution& mu, const Policy& pi) {
  return {spread(mu.weights, pi)};
}

Vector state_marginal(const Vector& sa, int n_states, int n_actions) {
  Vector out = Vector::Zero(n_states);
  for (int s = 0; s < n_states; ++s)
    out[s] = sa.segment(static_cast<Eigen::Index>(s) * n_actions, n_actions).sum();
  return out;
}

Policy conditional_policy(const SADistribution& d, int n_states, int n_actions,
                          const Policy& fallback) {
  Policy pi = fallback;
  for (int s = 0; s < n_states; ++s) {
    const auto row = d.weights.segment(static_cast<Eigen::Index>(s) * n_actions, n_actions);
    const double mass = row.sum();
    if (mass > 0.0) pi.probs.row(s) = row.transpose() / mass;
  }
  return pi;
}

Matrix transition_operator(const TabularMDP& mdp, const Policy& pi) {
  const Eigen::Index n = mdp.n_pairs();
  Matrix op = Matrix::Zero(n, n);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const Eigen::Index col = mdp.pair(s, a);
      for (int next = 0; next < mdp.n_states; ++next) {
        const double p = mdp.transition(col, next);
        if (p == 0.0) continue;
        for (int b = 0; b < mdp.n_actions; ++b) op(mdp.pair(next, b), col) = pi.probs(next, b) * p;
      }
    }
  }
  return op;
}

Vector apply_transition(const TabularMDP& mdp, const Policy& pi, const Vector& d) {
  return spread(next_state_marginal(mdp, d), pi);
}

Table apply_adjoint(const TabularMDP& mdp, const Policy& pi, const Table& q) {
  const Vector next_value = q.cwiseProduct(pi.probs).rowwise().sum();
  const Vector flat = mdp.transition * next_value;
  Table out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) out(s, a) = flat[mdp.pair(s, a)];
  return out;
}

SADistribution occupancy_measure(const TabularMDP& mdp, const Policy& pi,
                                 const SADistribution& start) {
  return {solve_occupancy(mdp, pi, start.weights)};
}

SADistribution occupancy_measure(const TabularMDP& mdp, const Policy& pi,
                                 const StateDistribution& start) {
  return occupancy_measure(mdp, pi, compose(start, pi));
}

SADistribution occupancy_measure(const TabularMDP& mdp, const NonStationaryPolicy& pi,
                                 const StateDistribution& start) {
  return {truncated_occupancy(mdp, pi, start, 0, std::nullopt)};
}

Vector neumann_occupancy(const TabularMDP& mdp, const Policy& pi, const Vector& start,
                         std::size_t terms) {
  Vector term = start;
  Vector total = start;
  for (std::size_t i = 1; i <= terms; ++i) {
    term = mdp.gamma * apply_transition(mdp, pi, term);
    total += term;
  }
  return (1.0 - mdp.gamma) * total;
}

std::vector<Vector> step_distributions(const TabularMDP& mdp, const NonStationaryPolicy& pi,
                                       const StateDistribution& start, std::size_t last) {
  return roll_forward(mdp, pi, spread(start.weights, pi.at(0)), last);
}

std::vector<Vector> step_distributions(const TabularMDP& mdp, const NonStationaryPolicy& pi,
                                       const SADistribution& start, std::size_t last) {
  return roll_forward(mdp, pi, start.weights, last);
}

Vector truncated_occupancy(const TabularMDP& mdp, const NonStationaryPolicy& pi,
                           const StateDistribution& start, std::size_t first,
                           std::optional<std::size_t> last) {
  return truncated_from(mdp, pi, spread(start.weights, pi.at(0)), first, last);
}

Vector truncated_occupancy(const TabularMDP& mdp, const NonStationaryPolicy& pi,
                           const SADistribution& start, std::size_t first,
                           std::optional<std::size_t> last) {
  return truncated_from(mdp, pi, start.weights, first, last);
}

Vector density_ratio(const Vector& num, const Vector& den) {
  if (num.size() != den.size()) throw ValidationError("density_ratio: size mismatch");
  Vector out(num.size());
  for (Eigen::Index i = 0; i < num.size(); ++i) {
    const bool num_zero = std::abs(num[i]) <= kZeroMass;
    const bool den_zero = std::abs(den[i]) <= kZeroMass;
    if (den_zero) {
      out[i] = num_zero ? 1.0 : std::numeric_limits<double>::infinity();
    } else {
      out[i] = num_zero ? 0.0 : num[i] / den[i];
    }
  }
  return out;
}

RatioSup sup_ratio(const Vector& num, const Vector& den) {
  const Vector r = density_ratio(num, den);
  RatioSup out{r.size() > 0 ? r[0] : 1.0, 0};
  for (Eigen::Index i = 1; i < r.size(); ++i) {
    if (r[i] > out.value) out = {r[i], i};
  }
  return out;
}

}  // namespace vopr
