#include "vopr/function_classes.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/LU>

#include "vopr/errors.hpp"
#include "vopr/random.hpp"

namespace vopr {

namespace {

constexpr double kNormalizationTolerance = 1e-9;
constexpr double kIdentityTolerance = 1e-9;

Vector flatten(const Table& t) {
  Vector out(t.size());
  for (Eigen::Index s = 0; s < t.rows(); ++s)
    for (Eigen::Index a = 0; a < t.cols(); ++a) out[s * t.cols() + a] = t(s, a);
  return out;
}

Table unflatten(const Vector& v, int n_states, int n_actions) {
  Table out(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) out(s, a) = v[static_cast<Eigen::Index>(s) * n_actions + a];
  return out;
}

// Per-state normalizer sum_a pi_c(a|s) beta(s,a).
Vector normalizers(const Table& beta, const Policy& pi_c) {
  return beta.cwiseProduct(pi_c.probs).rowwise().sum();
}

// Noise shared partly across actions of a state: 0.5 z(s,a) + 0.5 mean_a z(s,.).
Table smoothed_noise(Rng& rng, int n_states, int n_actions) {
  Table z(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) z(s, a) = rng.normal();
  const Vector mean = z.rowwise().mean();
  return 0.5 * z + 0.5 * mean.replicate(1, n_actions);
}

// Realized element goes to a seeded position among n_distractors + 1 slots.
std::vector<Table> place(Table realized, std::vector<Table> distractors, Rng& rng,
                         std::size_t& index) {
  index = static_cast<std::size_t>(rng() % (distractors.size() + 1));
  distractors.insert(distractors.begin() + static_cast<std::ptrdiff_t>(index), std::move(realized));
  return distractors;
}

}  // namespace

std::string to_string(FunctionKind kind) {
  switch (kind) {
    case FunctionKind::Q: return "Q";
    case FunctionKind::W: return "W";
    case FunctionKind::B: return "B";
  }
  return "?";
}

FunctionKind parse_function_kind(const std::string& text) {
  if (text == "Q") return FunctionKind::Q;
  if (text == "W") return FunctionKind::W;
  if (text == "B") return FunctionKind::B;
  throw ValidationError("unknown function class kind '" + text + "'");
}

double max_entry(const FiniteFunctionClass& cls) {
  double m = 0.0;
  for (const auto& f : cls.members) m = std::max(m, f.maxCoeff());
  return m;
}

void validate_class(const FiniteFunctionClass& cls, const Policy* pi_c) {
  if (cls.kind == FunctionKind::B && pi_c == nullptr) {
    throw ValidationError("B class validation needs the covering policy pi_c");
  }
  for (std::size_t i = 0; i < cls.members.size(); ++i) {
    const Table& f = cls.members[i];
    const double lo = f.minCoeff();
    const double hi = f.maxCoeff();
    if (!(lo >= 0.0) || !(hi <= cls.bound) || !std::isfinite(hi)) {
      std::ostringstream msg;
      msg << to_string(cls.kind) << " member " << i << " leaves [0, " << cls.bound
          << "]: range [" << lo << ", " << hi << "]";
      throw ValidationError(msg.str());
    }
    if (cls.kind == FunctionKind::B) {
      if (f.rows() != pi_c->probs.rows() || f.cols() != pi_c->probs.cols()) {
        throw ValidationError("B member shape differs from pi_c");
      }
      const Vector norm = normalizers(f, *pi_c);
      for (Eigen::Index s = 0; s < norm.size(); ++s) {
        if (std::abs(norm[s] - 1.0) > kNormalizationTolerance) {
          std::ostringstream msg;
          msg << "B member " << i << " not normalized against pi_c at state " << s
              << ": sum_a beta pi_c = " << norm[s];
          throw ValidationError(msg.str());
        }
      }
    }
  }
}

Table optimal_w(const TabularMDP& mdp, const OptimalSolution& opt, const SADistribution& d_c,
                const SADistribution& d_data) {
  const Eigen::Index n = mdp.n_pairs();
  const Matrix op = transition_operator(mdp, opt.pi_star_e);
  const Matrix system = Matrix::Identity(n, n) - mdp.gamma * op;
  const Vector source = d_c.weights.cwiseProduct(flatten(opt.q_star.values));
  const Vector target = system.partialPivLu().solve(source);

  Vector w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool num_zero = std::abs(target[i]) <= kZeroMass;
    const bool den_zero = d_data.weights[i] <= kZeroMass;
    if (den_zero && !num_zero) {
      std::ostringstream msg;
      msg << "unrealizable: w* needs mass " << target[i] << " at (s=" << i / mdp.n_actions
          << ", a=" << i % mdp.n_actions << ") where the data distribution has none";
      throw UnrealizableError(msg.str());
    }
    w[i] = den_zero ? 1.0 : std::max(0.0, target[i]) / d_data.weights[i];
  }

  // Re-check the defining identity (I - gamma P) (w o d_data) = d_c o Q*.
  const Vector reweighted = w.cwiseProduct(d_data.weights);
  const double err = (system * reweighted - source).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, source.cwiseAbs().maxCoeff());
  if (err > kIdentityTolerance * scale) {
    std::ostringstream msg;
    msg << "w* identity residual " << err << " exceeds tolerance";
    throw UnrealizableError(msg.str());
  }
  return unflatten(w, mdp.n_states, mdp.n_actions);
}

Table optimal_w(const TabularMDP& mdp, const SADistribution& d_c, const SADistribution& d_data) {
  return optimal_w(mdp, solve_optimal(mdp), d_c, d_data);
}

Table optimal_beta(const Policy& pi_star_e, const Policy& pi_c) {
  const auto S = pi_c.probs.rows();
  const auto A = pi_c.probs.cols();
  Table beta(S, A);
  for (Eigen::Index s = 0; s < S; ++s) {
    for (Eigen::Index a = 0; a < A; ++a) {
      const double target = pi_star_e.probs(s, a);
      const double base = pi_c.probs(s, a);
      if (base == 0.0) {
        if (target > 0.0) {
          std::ostringstream msg;
          msg << "policy uncovered at (s=" << s << ", a=" << a << ")";
          throw UnrealizableError(msg.str());
        }
        beta(s, a) = 1.0;
      } else {
        beta(s, a) = target / base;
      }
    }
  }
  return beta;
}

RealizableClasses build_realizable_classes(const TabularMDP& mdp, const OptimalSolution& opt,
                                           const SADistribution& d_c,
                                           const SADistribution& d_data, const Policy& pi_c,
                                           const DistractorOptions& options,
                                           std::uint64_t seed) {
  const int S = mdp.n_states;
  const int A = mdp.n_actions;
  const double v_max = mdp.v_max();

  const Table& q_star = opt.q_star.values;
  const Table w_star = optimal_w(mdp, opt, d_c, d_data);
  const Table beta_star = optimal_beta(opt.pi_star_e, pi_c);

  // One stream per class so changing one class size leaves the others alone.
  Rng q_rng(derive_seed(seed, 1));
  Rng w_rng(derive_seed(seed, 2));
  Rng b_rng(derive_seed(seed, 3));

  std::vector<Table> q_members;
  for (std::size_t k = 0; k < options.q_distractors; ++k) {
    Table q = q_star + options.scale * v_max * smoothed_noise(q_rng, S, A);
    q_members.push_back(q.cwiseMax(0.0).cwiseMin(v_max));
  }

  const double w_scale = std::max(1.0, w_star.maxCoeff());
  std::vector<Table> w_members;
  for (std::size_t k = 0; k < options.w_distractors; ++k) {
    Table w = w_star + options.scale * w_scale * smoothed_noise(w_rng, S, A);
    w_members.push_back(w.cwiseMax(0.0));
  }

  const double b_scale = std::max(1.0, beta_star.maxCoeff());
  std::vector<Table> b_members;
  for (std::size_t k = 0; k < options.b_distractors; ++k) {
    Table b = (beta_star + options.scale * b_scale * smoothed_noise(b_rng, S, A)).cwiseMax(0.0);
    const Vector norm = normalizers(b, pi_c);
    for (int s = 0; s < S; ++s) {
      if (norm[s] > 0.0) {
        b.row(s) /= norm[s];
      } else {
        b.row(s).setOnes();
      }
    }
    b_members.push_back(std::move(b));
  }

  Rng order_rng(derive_seed(seed, 4));
  RealizableClasses out;
  out.q.kind = FunctionKind::Q;
  out.q.members = place(q_star, std::move(q_members), order_rng, out.q_index);
  out.q.bound = v_max;

  out.w.kind = FunctionKind::W;
  out.w.members = place(w_star, std::move(w_members), order_rng, out.w_index);
  out.w.bound = max_entry(out.w);

  out.b.kind = FunctionKind::B;
  out.b.members = place(beta_star, std::move(b_members), order_rng, out.b_index);
  out.b.bound = max_entry(out.b);
  return out;
}

RealizableClasses build_realizable_classes(const TabularMDP& mdp, const SADistribution& d_c,
                                           const SADistribution& d_data, const Policy& pi_c,
                                           std::size_t n_distractors, std::uint64_t seed,
                                           double scale) {
  return build_realizable_classes(mdp, solve_optimal(mdp), d_c, d_data, pi_c,
                                  {n_distractors, n_distractors, n_distractors, scale}, seed);
}

}  // namespace vopr
