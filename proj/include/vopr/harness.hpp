#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vopr/dataset.hpp"
#include "vopr/function_classes.hpp"
#include "vopr/io.hpp"
#include "vopr/mdp.hpp"
#include "vopr/occupancy.hpp"
#include "vopr/solver.hpp"
#include "vopr/theory.hpp"

namespace vopr {

/// Four-state, two-action chain with two optimal routes out of state 0:
/// action 1 moves to state 1 (reward 1 forever), action 0 moves to state 2,
/// where action 0 reaches state 3 (reward 1/gamma forever) and action 1
/// returns to state 0. Starts in state 0.
TabularMDP build_counterexample(double gamma);

/// Dirichlet(1) transition rows; each reward is 0 with probability
/// `reward_sparsity` and U(0, 1) otherwise; uniform start; r_max = 1.
TabularMDP random_mdp(int n_states, int n_actions, std::uint64_t seed, double reward_sparsity,
                      double gamma = 0.9);

/// Deterministic policy that is greedy for q on supp(mu_c), with ties kept
/// open, and return-minimizing everywhere else.
Policy adversarial_policy(const TabularMDP& mdp, const QFunction& q,
                          const StateDistribution& mu_c);

enum class CoveringMode { Uniform, Data, States, Mixture };

struct ExperimentConfig {
  Json mdp_spec;  ///< {"kind": "random" | "counterexample" | "file", ...}
  CoveringMode covering = CoveringMode::Uniform;
  std::optional<Vector> mu_c;        ///< required for CoveringMode::States
  bool pi_c_uniform = false;         ///< otherwise pi_c = pi_b
  double mixture_eps = 0.0;
  std::optional<Vector> mu_data;     ///< uniform when absent
  std::optional<Matrix> pi_b;        ///< uniform when absent
  std::size_t q_size = 8;
  std::size_t w_size = 8;
  std::size_t b_size = 8;
  double distractor_scale = 0.3;
  std::vector<std::size_t> n_grid;
  double delta = 0.1;
  std::vector<std::uint64_t> seeds;
  std::size_t horizon = 0;
  std::size_t enumeration_cap = 200000;
  bool adversarial_tie_break = false;
  std::string rows_file = "rows.csv";
  std::string summary_file = "summary.txt";
};

/// Throws ConfigError naming the offending key. Relative file paths resolve
/// against `base_dir`.
ExperimentConfig parse_experiment_config(const Json& j,
                                         const std::filesystem::path& base_dir = {});
TabularMDP build_mdp(const Json& spec, const std::filesystem::path& base_dir = {});

/// Everything shared by the rows of one configuration.
struct ExperimentSetup {
  ExperimentConfig config;
  TabularMDP mdp;
  OptimalSolution opt;
  StateDistribution mu_data;
  Policy pi_b;
  SADistribution d_data;
  StateDistribution mu_c;
  Policy pi_c;
  SADistribution d_c;
  std::vector<EnumeratedPolicy> policies;  ///< every enumerated policy, no filter
  ConcentrabilityReport c_d;
  double covering_ratio = 0.0;  ///< ||d_c / d_data||_inf
};

ExperimentSetup prepare_experiment(const ExperimentConfig& config,
                                   const std::filesystem::path& base_dir = {});

struct ExperimentRow {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  double j_star = 0.0;
  double j_hat = 0.0;
  double gap = 0.0;
  double bound = 0.0;
  double q_error = 0.0;        ///< ||q^ - Q*||_{d_c,2}
  double q_error_bound = 0.0;  ///< 2 sqrt(eps_stat)
  double epsilon_stat = 0.0;
  double c_c = 0.0;
  double c_d = 0.0;
  double l1_lhs = 0.0;
  double l1_rhs = 0.0;
  double max_deviation = 0.0;   ///< sup_{q,w} |L^ - L|
  double excess_loss = 0.0;     ///< max_w L(q^, w) - L(Q*, w)
  double covering_ratio = 0.0;
  bool bound_holds = false;
  bool q_error_holds = false;
  bool l1_advantage_holds = false;
  bool concentration_holds = false;
  bool excess_loss_holds = false;
  bool covering_ratio_holds = false;
  std::string error;  ///< empty unless the row failed
};

/// Classes, dataset and solve for one (seed, N). Per-row failures are caught
/// and reported in `error`.
ExperimentRow run_row(const ExperimentSetup& setup, std::uint64_t seed, std::size_t n);

/// C_c and the suboptimality bound at the fixed point eps_c = bound(C_c(eps_c)),
/// iterated down from eps_c = +inf.
struct CoverageFixedPoint {
  double c_c = 0.0;
  double eps_c = 0.0;
  double bound = 0.0;
  int iterations = 0;
};

CoverageFixedPoint coverage_fixed_point(const ExperimentSetup& setup, double u_b,
                                        double eps_stat);

std::string row_csv_header();
std::string row_to_csv(const ExperimentRow& row);

struct ExperimentResult {
  std::vector<ExperimentRow> rows;  ///< rows computed in this call
  std::size_t skipped = 0;          ///< (seed, N) pairs already on disk
  std::size_t failures = 0;
};

/// Appends rows to out_dir/rows_file as they finish and skips (seed, N)
/// pairs already present there. Writes out_dir/summary_file at the end.
ExperimentResult run_experiment(const ExperimentSetup& setup,
                                const std::filesystem::path& out_dir, std::ostream& log);

/// Exit codes shared by the CLI subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRowFailure = 3;

int command_gen_mdp(const Json& cfg, const std::filesystem::path& base_dir,
                    const std::filesystem::path& out_dir, std::ostream& log);
int command_counterexample(const Json& cfg, const std::filesystem::path& base_dir,
                           const std::filesystem::path& out_dir, std::ostream& log);
int command_sample(const Json& cfg, const std::filesystem::path& base_dir,
                   const std::filesystem::path& out_dir, std::ostream& log);
int command_solve(const Json& cfg, const std::filesystem::path& base_dir,
                  const std::filesystem::path& out_dir, std::ostream& log);
int command_verify(const Json& cfg, const std::filesystem::path& base_dir,
                   const std::filesystem::path& out_dir, std::ostream& log);
int command_experiment(const Json& cfg, const std::filesystem::path& base_dir,
                       const std::filesystem::path& out_dir, std::ostream& log);

/// Loads the config file and dispatches; maps ConfigError and
/// ValidationError to kExitConfig.
int run_command(const std::string& name, const std::filesystem::path& config_path,
                const std::filesystem::path& out_dir, std::ostream& log, std::ostream& err);

}  // namespace vopr
