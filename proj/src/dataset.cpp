#include "vopr/dataset.hpp"

#include <sstream>

#include "vopr/errors.hpp"
#include "vopr/random.hpp"

namespace vopr {

Dataset sample_dataset(const TabularMDP& mdp, const StateDistribution& mu_data,
                       const Policy& pi_b, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("sample_dataset: n must be at least 1");
  validate_distribution(mu_data, mdp.n_states);
  validate_policy(pi_b, mdp.n_states, mdp.n_actions);

  Dataset ds;
  ds.meta = {fingerprint(mdp), mu_data.weights, pi_b.probs, seed, n};
  ds.tuples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    const int s = static_cast<int>(rng.categorical(mu_data.weights));
    const int a = static_cast<int>(rng.categorical(pi_b.probs.row(s).transpose()));
    const int next =
        static_cast<int>(rng.categorical(mdp.transition.row(mdp.pair(s, a)).transpose()));
    ds.tuples[i] = {s, a, mdp.reward(s, a), next};
  }
  return ds;
}

SADistribution empirical_state_action_dist(const Dataset& ds) {
  if (ds.tuples.empty()) throw ValidationError("empty dataset");
  const int A = ds.n_actions();
  Vector counts = Vector::Zero(static_cast<Eigen::Index>(ds.n_states()) * A);
  for (const auto& t : ds.tuples) counts[static_cast<Eigen::Index>(t.s) * A + t.a] += 1.0;
  return {counts / static_cast<double>(ds.tuples.size())};
}

void validate_dataset(const Dataset& ds, const TabularMDP& mdp) {
  for (std::size_t i = 0; i < ds.tuples.size(); ++i) {
    const auto& t = ds.tuples[i];
    if (t.s < 0 || t.s >= mdp.n_states || t.s_next < 0 || t.s_next >= mdp.n_states ||
        t.a < 0 || t.a >= mdp.n_actions) {
      throw ValidationError("tuple " + std::to_string(i) + " has an out-of-range index");
    }
    if (t.r != mdp.reward(t.s, t.a)) {
      std::ostringstream msg;
      msg << "tuple " << i << ": reward " << t.r << " differs from R(" << t.s << ", " << t.a
          << ") = " << mdp.reward(t.s, t.a);
      throw ValidationError(msg.str());
    }
    if (!(mdp.prob(t.s, t.a, t.s_next) > 0.0)) {
      std::ostringstream msg;
      msg << "tuple " << i << ": transition to " << t.s_next << " has zero probability";
      throw ValidationError(msg.str());
    }
  }
}

}  // namespace vopr
