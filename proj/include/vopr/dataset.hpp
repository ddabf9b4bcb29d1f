#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vopr/mdp.hpp"
#include "vopr/occupancy.hpp"

namespace vopr {

struct Transition {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct DatasetMeta {
  std::uint64_t mdp_hash = 0;
  Vector mu_data;
  Matrix pi_b;
  std::uint64_t seed = 0;
  std::size_t n = 0;
};

/// N i.i.d. tuples s ~ mu_data, a ~ pi_b(.|s), r = R(s, a), s' ~ P(.|s, a).
struct Dataset {
  std::vector<Transition> tuples;
  DatasetMeta meta;

  int n_states() const noexcept { return static_cast<int>(meta.pi_b.rows()); }
  int n_actions() const noexcept { return static_cast<int>(meta.pi_b.cols()); }
  std::size_t size() const noexcept { return tuples.size(); }
};

/// Tuple i is drawn from its own stream derive_seed(seed, i), so the result
/// does not depend on generation order.
Dataset sample_dataset(const TabularMDP& mdp, const StateDistribution& mu_data,
                       const Policy& pi_b, std::size_t n, std::uint64_t seed);

/// Normalized (s, a) counts. Throws ValidationError on an empty dataset.
SADistribution empirical_state_action_dist(const Dataset& ds);

/// Checks r == R(s, a) exactly and P(s' | s, a) > 0 for every tuple.
void validate_dataset(const Dataset& ds, const TabularMDP& mdp);

}  // namespace vopr
