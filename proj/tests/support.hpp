#pragma once

// Test-only reference implementations and random instance generators. The
// oracles avoid the library's code paths on purpose: plain loops, their own
// Gauss-Jordan solver, long power series instead of LU solves.

#include <cmath>
#include <cstdint>
#include <vector>

#include "vopr/harness.hpp"
#include "vopr/mdp.hpp"
#include "vopr/random.hpp"

namespace oracle {

using vopr::Matrix;
using vopr::Policy;
using vopr::TabularMDP;
using vopr::Vector;

using Dense = std::vector<std::vector<double>>;

// Gauss-Jordan with partial pivoting on nested vectors.
inline std::vector<double> solve(Dense a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      if (f == 0.0) continue;
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t r = 0; r < n; ++r) b[r] /= a[r][r];
  return b;
}

// Q_pi by solving the S*A system directly from the definitions.
inline Matrix q_values(const TabularMDP& m, const Policy& pi) {
  const int S = m.n_states, A = m.n_actions;
  const std::size_t n = static_cast<std::size_t>(S * A);
  Dense a(n, std::vector<double>(n, 0.0));
  std::vector<double> b(n);
  for (int s = 0; s < S; ++s)
    for (int u = 0; u < A; ++u) {
      const std::size_t row = static_cast<std::size_t>(s * A + u);
      a[row][row] += 1.0;
      b[row] = m.reward(s, u);
      for (int x = 0; x < S; ++x)
        for (int v = 0; v < A; ++v)
          a[row][static_cast<std::size_t>(x * A + v)] -=
              m.gamma * m.transition(s * A + u, x) * pi.probs(x, v);
    }
  const auto q = solve(a, b);
  Matrix out(S, A);
  for (int s = 0; s < S; ++s)
    for (int u = 0; u < A; ++u) out(s, u) = q[static_cast<std::size_t>(s * A + u)];
  return out;
}

inline double policy_return(const TabularMDP& m, const Policy& pi) {
  const Matrix q = q_values(m, pi);
  double j = 0.0;
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) j += m.initial_dist[s] * pi.probs(s, a) * q(s, a);
  return j;
}

// Optimal Q by exhausting all deterministic stationary policies.
inline Matrix brute_force_q_star(const TabularMDP& m) {
  const int S = m.n_states, A = m.n_actions;
  std::vector<int> acts(static_cast<std::size_t>(S), 0);
  Matrix best = Matrix::Constant(S, A, -1e300);
  for (;;) {
    const Matrix q = q_values(m, Policy::deterministic(acts, A));
    best = best.cwiseMax(q);
    int k = 0;
    while (k < S && ++acts[static_cast<std::size_t>(k)] == A) acts[static_cast<std::size_t>(k++)] = 0;
    if (k == S) break;
  }
  return best;
}

// Occupancy (1-g) sum_t g^t d_t by forward iteration until g^t < 1e-17.
inline Vector series_occupancy(const TabularMDP& m, const Policy& pi, const Vector& start_sa) {
  const int S = m.n_states, A = m.n_actions;
  Vector d = start_sa, total = Vector::Zero(S * A);
  double disc = 1.0;
  while (disc > 1e-17) {
    total += disc * d;
    Vector next = Vector::Zero(S * A);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const double mass = d[s * A + a];
        if (mass == 0.0) continue;
        for (int x = 0; x < S; ++x)
          for (int b = 0; b < A; ++b) next[x * A + b] += mass * m.transition(s * A + a, x) * pi.probs(x, b);
      }
    d = next;
    disc *= m.gamma;
  }
  return (1.0 - m.gamma) * total;
}

}  // namespace oracle

namespace gen {

using vopr::Matrix;
using vopr::Policy;
using vopr::Rng;
using vopr::TabularMDP;
using vopr::Vector;

inline Vector simplex(Rng& rng, int n, double zero_prob = 0.0) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform() < zero_prob ? 0.0 : rng.exponential();
  if (v.sum() == 0.0) v[static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n))] = 1.0;
  return v / v.sum();
}

inline Policy policy(Rng& rng, int S, int A, double zero_prob = 0.0) {
  Policy pi{Matrix(S, A)};
  for (int s = 0; s < S; ++s) pi.probs.row(s) = simplex(rng, A, zero_prob).transpose();
  return pi;
}

inline Policy deterministic_policy(Rng& rng, int S, int A) {
  std::vector<int> acts(static_cast<std::size_t>(S));
  for (auto& a : acts) a = static_cast<int>(rng() % static_cast<std::uint64_t>(A));
  return Policy::deterministic(acts, A);
}

/// Random MDP with 2..max_s states, 1..max_a actions and gamma in [lo, hi].
inline TabularMDP mdp(Rng& rng, int max_s = 5, int max_a = 3, double lo = 0.5, double hi = 0.95) {
  const int S = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_s - 1));
  const int A = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_a));
  TabularMDP m = vopr::random_mdp(S, A, rng(), 0.3, lo + (hi - lo) * rng.uniform());
  m.initial_dist = simplex(rng, S, 0.3);
  return m;
}

}  // namespace gen
