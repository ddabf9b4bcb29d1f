#include "vopr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "vopr/errors.hpp"
#include "vopr/random.hpp"

namespace vopr {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kClassStream = 0xC1A55;
constexpr std::uint64_t kDataStream = 0xDA7A;
constexpr double kInf = std::numeric_limits<double>::infinity();

// ---- config helpers ------------------------------------------------------

const Json& require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string("missing key '") + key + "'");
  return j.at(key);
}

template <class T>
T get_as(const Json& j, const char* key) {
  try {
    return require(j, key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("key '") + key + "' has the wrong type");
  }
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get_as<T>(j, key);
}

Vector vector_from(const Json& j, const char* key) {
  const auto v = get_as<std::vector<double>>(j, key);
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Policy given as nested rows [[...], ...] or the string "uniform".
std::optional<Matrix> policy_matrix(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) return std::nullopt;
  const Json& v = j.at(key);
  if (v.is_string()) {
    if (v.get<std::string>() == "uniform") return std::nullopt;
    throw ConfigError(std::string("key '") + key + "': unknown policy '" + v.get<std::string>() + "'");
  }
  std::vector<std::vector<double>> rows;
  try {
    rows = v.get<std::vector<std::vector<double>>>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("key '") + key + "' must be \"uniform\" or a list of rows");
  }
  if (rows.empty()) throw ConfigError(std::string("key '") + key + "' is empty");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t s = 0; s < rows.size(); ++s) {
    if (rows[s].size() != rows[0].size()) throw ConfigError(std::string("key '") + key + "' is ragged");
    for (std::size_t a = 0; a < rows[s].size(); ++a) m(s, a) = rows[s][a];
  }
  return m;
}

std::optional<Vector> distribution_or_uniform(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) return std::nullopt;
  if (j.at(key).is_string()) {
    if (j.at(key).get<std::string>() == "uniform") return std::nullopt;
    throw ConfigError(std::string("key '") + key + "' must be \"uniform\" or a list");
  }
  return vector_from(j, key);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

CoveringMode parse_covering_mode(const std::string& s) {
  if (s == "uniform") return CoveringMode::Uniform;
  if (s == "data") return CoveringMode::Data;
  if (s == "states") return CoveringMode::States;
  if (s == "mixture") return CoveringMode::Mixture;
  throw ConfigError("covering.mode: unknown mode '" + s + "'");
}

void check_size(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    std::ostringstream msg;
    msg << what << ": expected " << want << " entries, got " << got;
    throw ConfigError(msg.str());
  }
}

// ---- rows ------------------------------------------------------------------

struct RowOutputs {
  ExperimentRow row;
  std::optional<SolveReport> report;
  std::optional<RealizableClasses> classes;
};

double max_loss_deviation(const Matrix& empirical, const Matrix& population) {
  return (empirical - population).cwiseAbs().maxCoeff();
}

RowOutputs solve_row(const ExperimentSetup& setup, std::uint64_t seed, std::size_t n,
                     const Dataset* preloaded) {
  const ExperimentConfig& cfg = setup.config;
  const TabularMDP& mdp = setup.mdp;
  const OptimalSolution& opt = setup.opt;

  RowOutputs out;
  ExperimentRow& row = out.row;
  row.seed = seed;
  row.n = n;
  row.j_star = opt.j_star;
  row.c_d = setup.c_d.coefficient;
  row.covering_ratio = setup.covering_ratio;
  try {
    RealizableClasses classes = build_realizable_classes(
        mdp, opt, setup.d_c, setup.d_data, setup.pi_c,
        {cfg.q_size - 1, cfg.w_size - 1, cfg.b_size - 1, cfg.distractor_scale},
        derive_seed(seed, kClassStream));

    const Dataset ds = preloaded ? *preloaded
                                 : sample_dataset(mdp, setup.mu_data, setup.pi_b, n,
                                                  derive_seed(seed, kDataStream));
    row.n = ds.size();

    QSolve qs = solve_q(ds, mdp.gamma, setup.d_c, classes.q, classes.w);
    if (cfg.adversarial_tie_break) {
      const Policy adv = adversarial_policy(mdp, qs.q_hat, setup.mu_c);
      classes.b.members.insert(classes.b.members.begin(), optimal_beta(adv, setup.pi_c));
      classes.b.bound = max_entry(classes.b);
      ++classes.b_index;
    }
    PolicyExtraction pe = extract_policy(qs.q_hat, setup.mu_c, setup.pi_c, classes.b);

    const double eps = epsilon_stat(classes.w.bound, mdp.v_max(), classes.q.size(),
                                    classes.w.size(), cfg.delta, ds.size());
    const double u_b = classes.b.bound;
    const CoverageFixedPoint fp = coverage_fixed_point(setup, u_b, eps);

    row.epsilon_stat = eps;
    row.c_c = fp.c_c;
    row.bound = fp.bound;
    row.j_hat = expected_return(mdp, pe.pi_hat);
    row.gap = row.j_star - row.j_hat;
    row.bound_holds = row.gap <= row.bound + kReturnTolerance;

    const QErrorCheck qe = verify_q_error(opt, setup.d_c, qs.q_hat, eps);
    row.q_error = qe.distance;
    row.q_error_bound = qe.bound;
    row.q_error_holds = qe.holds;

    const L1AdvantageCheck l1 =
        verify_l1_advantage(opt, setup.mu_c, setup.pi_c, qs.q_hat, pe.pi_hat, u_b);
    row.l1_lhs = l1.lhs;
    row.l1_rhs = l1.rhs;
    row.l1_advantage_holds = l1.holds;

    const QSolve pop = solve_q_population(mdp, setup.d_c, setup.d_data, classes.q, classes.w);
    row.max_deviation = max_loss_deviation(qs.loss_table, pop.loss_table);
    row.concentration_holds = row.max_deviation <= eps;

    double excess = -kInf;
    for (std::size_t j = 0; j < classes.w.size(); ++j) {
      const double at_star =
          population_loss(mdp, setup.d_c, setup.d_data, opt.q_star.values, classes.w.members[j]);
      excess = std::max(excess, pop.loss_table(static_cast<Eigen::Index>(qs.choice.q_index),
                                               static_cast<Eigen::Index>(j)) - at_star);
    }
    row.excess_loss = excess;
    row.excess_loss_holds = excess <= 2.0 * eps + kReturnTolerance;

    row.covering_ratio_holds = !std::isfinite(row.c_d) ||
                               row.covering_ratio <= row.c_d / (1.0 - mdp.gamma) + kReturnTolerance;

    SolveReport report;
    report.q_index = qs.choice.q_index;
    report.w_index = qs.choice.row_argmax[qs.choice.q_index];
    report.q_hat = qs.q_hat;
    report.loss_table = qs.loss_table;
    report.beta_index = pe.beta_index;
    report.beta_hat = pe.beta_hat;
    report.pi_hat = pe.pi_hat;
    report.beta_objective = pe.objective;
    report.epsilon_stat = eps;
    report.bound = fp.bound;
    out.report = std::move(report);
    out.classes = std::move(classes);
  } catch (const Error& e) {
    row.error = e.what();
  }
  return out;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string summarize(const fs::path& rows_path) {
  std::ifstream in(rows_path);
  std::string line;
  std::getline(in, line);
  const auto header = split_csv(line);
  std::map<std::size_t, std::vector<std::vector<std::string>>> by_n;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv(line);
    by_n[std::stoul(cells[1])].push_back(std::move(cells));
  }
  auto column = [&](const char* name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  const std::size_t gap_col = column("gap");
  const std::size_t err_col = column("error");
  const char* flags[] = {"bound_holds",         "q_error_holds",     "l1_advantage_holds",
                         "concentration_holds", "excess_loss_holds", "covering_ratio_holds"};

  std::ostringstream out;
  for (const auto& [n, rows] : by_n) {
    std::vector<double> gaps;
    std::size_t failed = 0;
    std::map<std::string, std::size_t> passes;
    for (const auto& r : rows) {
      if (!r[err_col].empty()) {
        ++failed;
        continue;
      }
      gaps.push_back(parse_double(r[gap_col]));
      for (const char* f : flags) passes[f] += r[column(f)] == "1" ? 1 : 0;
    }
    out << "N=" << n << " rows=" << rows.size() << " failed=" << failed;
    if (!gaps.empty()) {
      std::sort(gaps.begin(), gaps.end());
      const std::size_t m = gaps.size();
      const double median = m % 2 ? gaps[m / 2] : 0.5 * (gaps[m / 2 - 1] + gaps[m / 2]);
      out << " median_gap=" << format_double(median);
      for (const char* f : flags) out << " " << f << "=" << passes[f] << "/" << m;
    }
    out << "\n";
  }
  return out.str();
}

// ---- command helpers -----------------------------------------------------

std::string policy_text(const Policy& pi) {
  std::ostringstream out;
  for (int s = 0; s < pi.n_states(); ++s) {
    out << "  " << s << ":";
    for (int a = 0; a < pi.n_actions(); ++a) out << " " << format_double(pi.probs(s, a));
    out << "\n";
  }
  return out.str();
}

std::string witness_text(const ConcentrabilityReport& r) {
  std::ostringstream out;
  out << format_double(r.coefficient) << " (witness policy " << r.witness_policy_index
      << ", index " << r.witness_index << ", policies " << r.policy_count << ", horizon "
      << r.horizon_used << ")";
  return out.str();
}

}  // namespace

// ---- builders --------------------------------------------------------------

TabularMDP build_counterexample(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0, 1)");
  TabularMDP mdp;
  mdp.n_states = 4;
  mdp.n_actions = 2;
  mdp.gamma = gamma;
  mdp.transition = Matrix::Zero(8, 4);
  auto go = [&](int s, int a, int next) { mdp.transition(mdp.pair(s, a), next) = 1.0; };
  go(0, 0, 2);
  go(0, 1, 1);
  go(1, 0, 1);
  go(1, 1, 1);
  go(2, 0, 3);
  go(2, 1, 0);
  go(3, 0, 3);
  go(3, 1, 3);
  mdp.reward = Table::Zero(4, 2);
  mdp.reward.row(1).setConstant(1.0);
  mdp.reward.row(3).setConstant(1.0 / gamma);
  mdp.r_max = std::max(1.0, 1.0 / gamma);
  mdp.initial_dist = Vector::Unit(4, 0);
  return validate_mdp(std::move(mdp));
}

TabularMDP random_mdp(int n_states, int n_actions, std::uint64_t seed, double reward_sparsity,
                      double gamma) {
  if (n_states < 1 || n_actions < 1) throw ValidationError("random_mdp: sizes must be >= 1");
  if (!(reward_sparsity >= 0.0 && reward_sparsity <= 1.0)) {
    throw ValidationError("random_mdp: reward_sparsity must lie in [0, 1]");
  }
  Rng rng(seed);
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.transition.resize(static_cast<Eigen::Index>(n_states) * n_actions, n_states);
  for (Eigen::Index r = 0; r < mdp.transition.rows(); ++r) {
    for (int x = 0; x < n_states; ++x) mdp.transition(r, x) = rng.exponential();
    mdp.transition.row(r) /= mdp.transition.row(r).sum();
  }
  mdp.reward.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) {
      const double u = rng.uniform();
      const double r = rng.uniform();
      mdp.reward(s, a) = u < reward_sparsity ? 0.0 : r;
    }
  mdp.r_max = 1.0;
  mdp.initial_dist = Vector::Constant(n_states, 1.0 / n_states);
  return validate_mdp(std::move(mdp));
}

Policy adversarial_policy(const TabularMDP& mdp, const QFunction& q,
                          const StateDistribution& mu_c) {
  const int S = mdp.n_states;
  const int A = mdp.n_actions;
  std::vector<std::vector<int>> allowed(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    const double best = q.values.row(s).maxCoeff();
    for (int a = 0; a < A; ++a) {
      if (mu_c.weights[s] <= 0.0 ||
          q.values(s, a) >= best - kTieTolerance * std::max(1.0, std::abs(best))) {
        allowed[s].push_back(a);
      }
    }
  }
  // Policy iteration that minimizes the value over the allowed actions.
  std::vector<int> actions(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) actions[s] = allowed[s].front();
  for (int sweep = 0; sweep < 1000; ++sweep) {
    const Policy pi = Policy::deterministic(actions, A);
    const Vector v = policy_state_values(mdp, pi);
    bool changed = false;
    for (int s = 0; s < S; ++s) {
      auto value = [&](int a) {
        return mdp.reward(s, a) + mdp.gamma * mdp.transition.row(mdp.pair(s, a)).dot(v);
      };
      const double current = value(actions[s]);
      int best = actions[s];
      for (int a : allowed[s])
        if (value(a) < value(best)) best = a;
      if (value(best) < current - 1e-12 * std::max(1.0, std::abs(current))) {
        actions[s] = best;
        changed = true;
      }
    }
    if (!changed) return pi;
  }
  return Policy::deterministic(actions, A);
}

TabularMDP build_mdp(const Json& spec, const fs::path& base_dir) {
  const std::string kind = get_as<std::string>(spec, "kind");
  if (kind == "counterexample") return build_counterexample(get_or<double>(spec, "gamma", 0.9));
  if (kind == "random") {
    return random_mdp(get_as<int>(spec, "n_states"), get_as<int>(spec, "n_actions"),
                      get_or<std::uint64_t>(spec, "seed", 0),
                      get_or<double>(spec, "reward_sparsity", 0.5),
                      get_or<double>(spec, "gamma", 0.9));
  }
  if (kind == "file") {
    const fs::path path = resolve(base_dir, get_as<std::string>(spec, "path"));
    if (!fs::exists(path)) throw ConfigError("mdp.path: file not found: " + path.string());
    return load_mdp(path);
  }
  throw ConfigError("mdp.kind: unknown kind '" + kind + "'");
}

ExperimentConfig parse_experiment_config(const Json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be an object");
  ExperimentConfig cfg;
  cfg.mdp_spec = require(j, "mdp");
  if (cfg.mdp_spec.value("kind", std::string()) == "file") {
    const fs::path path = resolve(base_dir, get_as<std::string>(cfg.mdp_spec, "path"));
    if (!fs::exists(path)) throw ConfigError("mdp.path: file not found: " + path.string());
    cfg.mdp_spec["path"] = path.string();
  }

  const Json covering = j.value("covering", Json::object());
  cfg.covering = parse_covering_mode(get_or<std::string>(covering, "mode", "uniform"));
  if (cfg.covering == CoveringMode::States) cfg.mu_c = vector_from(covering, "mu_c");
  const std::string pi_c = get_or<std::string>(covering, "pi_c", "behavior");
  if (pi_c != "behavior" && pi_c != "uniform") {
    throw ConfigError("covering.pi_c must be \"behavior\" or \"uniform\"");
  }
  cfg.pi_c_uniform = pi_c == "uniform";
  cfg.mixture_eps = get_or<double>(covering, "mixture_eps", 0.0);
  if (!(cfg.mixture_eps >= 0.0)) throw ConfigError("covering.mixture_eps must be >= 0");

  const Json data = j.value("data", Json::object());
  cfg.mu_data = distribution_or_uniform(data, "mu");
  cfg.pi_b = policy_matrix(data, "pi_b");

  const Json classes = j.value("classes", Json::object());
  cfg.q_size = get_or<std::size_t>(classes, "q_size", 8);
  cfg.w_size = get_or<std::size_t>(classes, "w_size", 8);
  cfg.b_size = get_or<std::size_t>(classes, "b_size", 8);
  cfg.distractor_scale = get_or<double>(classes, "distractor_scale", 0.3);
  if (cfg.q_size < 1 || cfg.w_size < 1 || cfg.b_size < 1) {
    throw ConfigError("classes: every class size must be >= 1");
  }

  if (j.contains("n_grid")) {
    cfg.n_grid = get_as<std::vector<std::size_t>>(j, "n_grid");
  } else if (j.contains("n")) {
    cfg.n_grid = {get_as<std::size_t>(j, "n")};
  }
  if (cfg.n_grid.empty()) throw ConfigError("n_grid is empty");
  for (std::size_t n : cfg.n_grid)
    if (n < 1) throw ConfigError("n_grid entries must be >= 1");

  cfg.delta = get_or<double>(j, "delta", 0.1);
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");

  if (j.contains("seeds") && j.at("seeds").is_object()) {
    const auto start = get_or<std::uint64_t>(j.at("seeds"), "start", 0);
    const auto count = get_as<std::uint64_t>(j.at("seeds"), "count");
    for (std::uint64_t k = 0; k < count; ++k) cfg.seeds.push_back(start + k);
  } else if (j.contains("seeds")) {
    cfg.seeds = get_as<std::vector<std::uint64_t>>(j, "seeds");
  } else if (j.contains("seed")) {
    cfg.seeds = {get_as<std::uint64_t>(j, "seed")};
  }
  if (cfg.seeds.empty()) throw ConfigError("seed list is empty");

  cfg.horizon = get_or<std::size_t>(j, "horizon", 0);
  cfg.enumeration_cap = get_or<std::size_t>(j, "enumeration_cap", 200000);
  cfg.adversarial_tie_break = get_or<bool>(j, "adversarial_tie_break", false);
  const Json output = j.value("output", Json::object());
  cfg.rows_file = get_or<std::string>(output, "rows", "rows.csv");
  cfg.summary_file = get_or<std::string>(output, "summary", "summary.txt");
  return cfg;
}

ExperimentSetup prepare_experiment(const ExperimentConfig& config, const fs::path& base_dir) {
  ExperimentSetup setup;
  setup.config = config;
  setup.mdp = build_mdp(config.mdp_spec, base_dir);
  const TabularMDP& mdp = setup.mdp;
  const int S = mdp.n_states;
  const int A = mdp.n_actions;
  setup.opt = solve_optimal(mdp);

  setup.mu_data = config.mu_data ? StateDistribution{*config.mu_data} : uniform_states(S);
  check_size(setup.mu_data.weights.size(), S, "data.mu");
  setup.pi_b = config.pi_b ? Policy{*config.pi_b} : Policy::uniform(S, A);
  check_size(setup.pi_b.probs.rows(), S, "data.pi_b rows");
  check_size(setup.pi_b.probs.cols(), A, "data.pi_b columns");
  validate_distribution(setup.mu_data, S);
  validate_policy(setup.pi_b, S, A);
  setup.d_data = compose(setup.mu_data, setup.pi_b);

  setup.policies = enumerate_policies(mdp, {config.horizon, config.enumeration_cap, true});

  setup.pi_c = config.pi_c_uniform ? Policy::uniform(S, A) : setup.pi_b;
  switch (config.covering) {
    case CoveringMode::Uniform:
      setup.mu_c = uniform_states(S);
      break;
    case CoveringMode::Data:
      setup.mu_c = setup.mu_data;
      break;
    case CoveringMode::States:
      setup.mu_c = StateDistribution{*config.mu_c};
      check_size(setup.mu_c.weights.size(), S, "covering.mu_c");
      validate_distribution(setup.mu_c, S);
      break;
    case CoveringMode::Mixture: {
      std::vector<NonStationaryPolicy> members;
      for (const auto& p : near_optimal_policies(mdp, setup.opt.j_star, config.mixture_eps,
                                                 setup.policies)) {
        members.push_back(p.policy);
      }
      const Vector weights =
          Vector::Constant(static_cast<Eigen::Index>(members.size()), 1.0 / members.size());
      setup.d_c = mixture_covering(mdp, members, weights);
      setup.mu_c = {state_marginal(setup.d_c.weights, S, A)};
      setup.pi_c = conditional_policy(setup.d_c, S, A, setup.pi_c);
      break;
    }
  }
  if (config.covering != CoveringMode::Mixture) setup.d_c = compose(setup.mu_c, setup.pi_c);

  setup.c_d = concentrability_cd(mdp, setup.opt, setup.d_c, setup.d_data);
  setup.covering_ratio = sup_ratio(setup.d_c.weights, setup.d_data.weights).value;
  return setup;
}

CoverageFixedPoint coverage_fixed_point(const ExperimentSetup& setup, double u_b,
                                        double eps_stat) {
  CoverageFixedPoint fp;
  fp.eps_c = kInf;
  for (;;) {
    ++fp.iterations;
    fp.c_c = concentrability_cc(setup.mu_c, setup.opt.j_star, fp.eps_c, setup.policies,
                                setup.config.horizon)
                 .coefficient;
    fp.bound = std::isinf(fp.c_c) && eps_stat > 0.0
                   ? kInf
                   : suboptimality_bound(fp.c_c, u_b, eps_stat, setup.mdp.gamma);
    // Shrinking eps_c can only shrink the policy set, so this terminates.
    if (!(fp.bound < fp.eps_c) || fp.iterations >= 1000) break;
    fp.eps_c = fp.bound;
  }
  return fp;
}

ExperimentRow run_row(const ExperimentSetup& setup, std::uint64_t seed, std::size_t n) {
  return solve_row(setup, seed, n, nullptr).row;
}

std::string row_csv_header() {
  return "seed,n,j_star,j_hat,gap,bound,q_error,q_error_bound,epsilon_stat,c_c,c_d,l1_lhs,"
         "l1_rhs,max_deviation,excess_loss,covering_ratio,bound_holds,q_error_holds,"
         "l1_advantage_holds,concentration_holds,excess_loss_holds,covering_ratio_holds,error";
}

std::string row_to_csv(const ExperimentRow& r) {
  std::ostringstream out;
  auto d = [&](double x) { out << format_double(x) << ","; };
  auto b = [&](bool x) { out << (x ? 1 : 0) << ","; };
  out << r.seed << "," << r.n << ",";
  for (double x : {r.j_star, r.j_hat, r.gap, r.bound, r.q_error, r.q_error_bound,
                   r.epsilon_stat, r.c_c, r.c_d, r.l1_lhs, r.l1_rhs, r.max_deviation,
                   r.excess_loss, r.covering_ratio}) {
    d(x);
  }
  for (bool x : {r.bound_holds, r.q_error_holds, r.l1_advantage_holds, r.concentration_holds,
                 r.excess_loss_holds, r.covering_ratio_holds}) {
    b(x);
  }
  out << sanitize(r.error);
  return out.str();
}

ExperimentResult run_experiment(const ExperimentSetup& setup, const fs::path& out_dir,
                                std::ostream& log) {
  fs::create_directories(out_dir);
  const fs::path rows_path = out_dir / setup.config.rows_file;

  std::set<std::pair<std::uint64_t, std::size_t>> done;
  bool have_header = false;
  if (fs::exists(rows_path)) {
    std::ifstream in(rows_path);
    std::string line;
    if (std::getline(in, line)) {
      if (line != row_csv_header()) {
        throw ConfigError(rows_path.string() + " exists with a different header");
      }
      have_header = true;
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() < 2) continue;
      done.insert({std::stoull(cells[0]), std::stoul(cells[1])});
    }
  }

  std::ofstream out(rows_path, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot write " + rows_path.string());
  if (!have_header) out << row_csv_header() << "\n" << std::flush;

  ExperimentResult result;
  for (std::uint64_t seed : setup.config.seeds) {
    for (std::size_t n : setup.config.n_grid) {
      if (done.count({seed, n})) {
        ++result.skipped;
        continue;
      }
      ExperimentRow row = run_row(setup, seed, n);
      out << row_to_csv(row) << "\n" << std::flush;
      done.insert({seed, n});
      if (!row.error.empty()) {
        ++result.failures;
        log << "seed " << seed << " N " << n << ": " << row.error << "\n";
      }
      result.rows.push_back(std::move(row));
    }
  }
  out.close();
  write_text_file(out_dir / setup.config.summary_file, summarize(rows_path));
  log << result.rows.size() << " rows written, " << result.skipped << " skipped, "
      << result.failures << " failed\n";
  return result;
}

// ---- commands --------------------------------------------------------------

int command_gen_mdp(const Json& cfg, const fs::path& base_dir, const fs::path& out_dir,
                    std::ostream& log) {
  const TabularMDP mdp = build_mdp(require(cfg, "mdp"), base_dir);
  const OptimalSolution opt = solve_optimal(mdp);
  fs::create_directories(out_dir);
  save_mdp(out_dir / "mdp.json", mdp);
  std::ostringstream summary;
  summary << "fingerprint: " << fingerprint(mdp) << "\n";
  summary << "j_star: " << format_double(opt.j_star) << "\n";
  summary << "v_max: " << format_double(mdp.v_max()) << "\n";
  summary << "pi_star_e:\n" << policy_text(opt.pi_star_e);
  write_text_file(out_dir / "summary.txt", summary.str());
  log << "wrote " << (out_dir / "mdp.json").string() << "\n";
  return kExitOk;
}

int command_counterexample(const Json& cfg, const fs::path&, const fs::path& out_dir,
                           std::ostream& log) {
  const double gamma = get_or<double>(cfg, "gamma", 0.9);
  const TabularMDP mdp = build_counterexample(gamma);
  Vector mu = Vector::Zero(4);
  mu[0] = 0.5;
  mu[1] = 0.5;
  if (cfg.contains("mu_c")) mu = vector_from(cfg, "mu_c");
  check_size(mu.size(), 4, "mu_c");
  const StateDistribution mu_c{mu};
  validate_distribution(mu_c, 4);
  const std::size_t horizon = get_or<std::size_t>(cfg, "horizon", 0);
  const double eps = get_or<double>(cfg, "eps", 0.0);

  const OptimalSolution opt = solve_optimal(mdp);
  const Policy pi_hat = get_or<bool>(cfg, "adversarial_tie_break", true)
                            ? adversarial_policy(mdp, opt.q_star, mu_c)
                            : opt.pi_star_e;
  const ConcentrabilityReport cc =
      concentrability_cc(mdp, mu_c, eps, {horizon, get_or<std::size_t>(cfg, "enumeration_cap", 200000), true});
  const AdvantageReport adv =
      verify_advantage_to_suboptimality(mdp, opt, mu_c, pi_hat, 0.0, cc.coefficient, horizon);

  std::ostringstream out;
  out << "gamma: " << format_double(gamma) << "\n";
  out << "j_star: " << format_double(opt.j_star) << "\n";
  out << "pi_hat:\n" << policy_text(pi_hat);
  out << "advantage_inner_product: " << format_double(adv.premise) << "\n";
  out << "gap: " << format_double(adv.gap) << "\n";
  out << "c_c: " << witness_text(cc) << "\n";
  out << "coverage_failure: " << (adv.coverage_failure ? "yes" : "no") << "\n";
  fs::create_directories(out_dir);
  save_mdp(out_dir / "mdp.json", mdp);
  write_text_file(out_dir / "counterexample.txt", out.str());
  log << out.str();
  return kExitOk;
}

int command_sample(const Json& cfg, const fs::path& base_dir, const fs::path& out_dir,
                   std::ostream& log) {
  const TabularMDP mdp = build_mdp(require(cfg, "mdp"), base_dir);
  const Json data = cfg.value("data", Json::object());
  const auto mu = distribution_or_uniform(data, "mu");
  const auto pi = policy_matrix(data, "pi_b");
  const StateDistribution mu_data = mu ? StateDistribution{*mu} : uniform_states(mdp.n_states);
  const Policy pi_b = pi ? Policy{*pi} : Policy::uniform(mdp.n_states, mdp.n_actions);
  check_size(mu_data.weights.size(), mdp.n_states, "data.mu");
  check_size(pi_b.probs.rows(), mdp.n_states, "data.pi_b rows");
  check_size(pi_b.probs.cols(), mdp.n_actions, "data.pi_b columns");
  const auto n = get_as<std::size_t>(cfg, "n");
  if (n < 1) throw ConfigError("n must be >= 1");
  const Dataset ds = sample_dataset(mdp, mu_data, pi_b, n, get_or<std::uint64_t>(cfg, "seed", 0));
  fs::create_directories(out_dir);
  save_dataset(out_dir / "dataset.jsonl", ds);
  write_text_file(out_dir / "empirical_distribution.csv",
                  sa_distribution_csv(empirical_state_action_dist(ds), mdp.n_actions));
  log << "wrote " << ds.size() << " tuples to " << (out_dir / "dataset.jsonl").string() << "\n";
  return kExitOk;
}

int command_solve(const Json& cfg, const fs::path& base_dir, const fs::path& out_dir,
                  std::ostream& log) {
  const ExperimentConfig config = parse_experiment_config(cfg, base_dir);
  const ExperimentSetup setup = prepare_experiment(config, base_dir);
  std::optional<Dataset> ds;
  if (cfg.contains("dataset")) {
    const fs::path path = resolve(base_dir, get_as<std::string>(cfg, "dataset"));
    if (!fs::exists(path)) throw ConfigError("dataset: file not found: " + path.string());
    ds = load_dataset(path);
    validate_dataset(*ds, setup.mdp);
  }
  const RowOutputs res =
      solve_row(setup, config.seeds.front(), config.n_grid.front(), ds ? &*ds : nullptr);
  fs::create_directories(out_dir);
  write_text_file(out_dir / "row.csv", row_csv_header() + "\n" + row_to_csv(res.row) + "\n");
  if (!res.row.error.empty()) {
    log << "solve failed: " << res.row.error << "\n";
    return kExitRowFailure;
  }
  write_text_file(out_dir / "loss_table.csv", loss_table_csv(res.report->loss_table));
  write_text_file(out_dir / "report.txt", solve_report_text(*res.report));
  write_json_file(out_dir / "pi_hat.json", policy_to_json(res.report->pi_hat));
  write_json_file(out_dir / "q_class.json", class_to_json(res.classes->q));
  write_json_file(out_dir / "w_class.json", class_to_json(res.classes->w));
  write_json_file(out_dir / "b_class.json", class_to_json(res.classes->b));
  log << "gap " << format_double(res.row.gap) << " bound " << format_double(res.row.bound) << "\n";
  return kExitOk;
}

int command_verify(const Json& cfg, const fs::path& base_dir, const fs::path& out_dir,
                   std::ostream& log) {
  Json with_defaults = cfg;
  if (!with_defaults.contains("n_grid") && !with_defaults.contains("n")) with_defaults["n"] = 1;
  if (!with_defaults.contains("seeds") && !with_defaults.contains("seed")) with_defaults["seed"] = 0;
  const ExperimentConfig config = parse_experiment_config(with_defaults, base_dir);
  const ExperimentSetup setup = prepare_experiment(config, base_dir);
  const double eps = get_or<double>(cfg, "eps", 0.0);
  const double gamma = setup.mdp.gamma;

  std::ostringstream csv;
  csv << "check,value,bound,holds\n";
  bool all_hold = true;
  auto emit = [&](const std::string& name, double value, double bound, bool holds) {
    csv << name << "," << format_double(value) << "," << format_double(bound) << ","
        << (holds ? 1 : 0) << "\n";
    all_hold = all_hold && holds;
  };

  const ConcentrabilityReport cc =
      concentrability_cc(setup.mu_c, setup.opt.j_star, eps, setup.policies, config.horizon);
  emit("c_c", cc.coefficient, kInf, true);
  emit("c_d", setup.c_d.coefficient, kInf, true);
  emit("covering_ratio", setup.covering_ratio, setup.c_d.coefficient / (1.0 - gamma),
       !std::isfinite(setup.c_d.coefficient) ||
           setup.covering_ratio <= setup.c_d.coefficient / (1.0 - gamma) + kReturnTolerance);

  if (config.covering == CoveringMode::Mixture) {
    std::vector<NonStationaryPolicy> members;
    for (const auto& p :
         near_optimal_policies(setup.mdp, setup.opt.j_star, config.mixture_eps, setup.policies)) {
      members.push_back(p.policy);
    }
    const double per_step = max_per_step_coefficient(setup.mdp, setup.opt, members, setup.d_data);
    emit("mixture_flow_coefficient", setup.c_d.coefficient, per_step,
         setup.c_d.coefficient <= per_step + kReturnTolerance);
  }

  if (cfg.contains("policy")) {
    const fs::path path = resolve(base_dir, get_as<std::string>(cfg, "policy"));
    if (!fs::exists(path)) throw ConfigError("policy: file not found: " + path.string());
    const Policy pi_hat = policy_from_json(read_json_file(path));
    validate_policy(pi_hat, setup.mdp.n_states, setup.mdp.n_actions);
    const Vector adv = action_average(setup.opt.q_star.values, pi_hat) -
                       action_average(setup.opt.q_star.values, setup.opt.pi_star_e);
    const double eps_adv = get_or<double>(cfg, "eps_adv", std::max(0.0, -setup.mu_c.weights.dot(adv)));
    const AdvantageReport r = verify_advantage_to_suboptimality(
        setup.mdp, setup.opt, setup.mu_c, pi_hat, eps_adv, cc.coefficient, config.horizon);
    emit("advantage_premise", r.premise, -eps_adv, true);
    emit("suboptimality", r.gap, r.bound, r.holds);
    emit("switched_policies", r.switched_gaps.empty() ? 0.0 : *std::max_element(r.switched_gaps.begin(), r.switched_gaps.end()),
         r.bound, r.induction_holds);
  }

  fs::create_directories(out_dir);
  write_text_file(out_dir / "verify.csv", csv.str());
  std::ostringstream summary;
  summary << "c_c: " << witness_text(cc) << "\n";
  summary << "c_d: " << witness_text(setup.c_d) << "\n";
  write_text_file(out_dir / "summary.txt", summary.str());
  log << csv.str();
  return all_hold ? kExitOk : kExitRowFailure;
}

int command_experiment(const Json& cfg, const fs::path& base_dir, const fs::path& out_dir,
                       std::ostream& log) {
  const ExperimentConfig config = parse_experiment_config(cfg, base_dir);
  const ExperimentSetup setup = prepare_experiment(config, base_dir);
  const ExperimentResult result = run_experiment(setup, out_dir, log);
  return result.failures ? kExitRowFailure : kExitOk;
}

int run_command(const std::string& name, const fs::path& config_path, const fs::path& out_dir,
                std::ostream& log, std::ostream& err) {
  using Command = int (*)(const Json&, const fs::path&, const fs::path&, std::ostream&);
  static const std::map<std::string, Command> commands = {
      {"gen-mdp", command_gen_mdp},   {"counterexample", command_counterexample},
      {"sample", command_sample},     {"solve", command_solve},
      {"verify", command_verify},     {"experiment", command_experiment}};
  const auto it = commands.find(name);
  if (it == commands.end()) {
    err << "unknown command '" << name << "'\n";
    return kExitConfig;
  }
  try {
    if (!fs::exists(config_path)) throw ConfigError("config file not found: " + config_path.string());
    Json cfg;
    try {
      cfg = read_json_file(config_path);
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
    return it->second(cfg, config_path.parent_path(), out_dir, log);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ValidationError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const EnumerationTooLarge& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRowFailure;
  }
}

}  // namespace vopr
