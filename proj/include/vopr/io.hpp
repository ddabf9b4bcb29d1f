#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "vopr/dataset.hpp"
#include "vopr/function_classes.hpp"
#include "vopr/mdp.hpp"
#include "vopr/occupancy.hpp"
#include "vopr/solver.hpp"

namespace vopr {

using Json = nlohmann::json;

/// Shortest decimal that parses back to the same double; "inf", "-inf", "nan"
/// for non-finite values.
std::string format_double(double x);
double parse_double(const std::string& text);

/// {"format": "vopr-mdp", "n_states", "n_actions", "gamma", "r_max",
///  "transition": [S*A*S, row s*A+a], "reward": [S*A], "initial_dist": [S]}
Json mdp_to_json(const TabularMDP& mdp);
TabularMDP mdp_from_json(const Json& j);

/// {"format": "vopr-policy", "n_states", "n_actions", "probs": [S*A]}
Json policy_to_json(const Policy& pi);
Policy policy_from_json(const Json& j);

/// {"format": "vopr-class", "kind", "n_states", "n_actions", "bound",
///  "members": [[S*A], ...]}
Json class_to_json(const FiniteFunctionClass& cls);
FiniteFunctionClass class_from_json(const Json& j);

Json table_to_json(const Table& t);
Table table_from_json(const Json& j, int n_states, int n_actions);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

void save_mdp(const std::filesystem::path& path, const TabularMDP& mdp);
TabularMDP load_mdp(const std::filesystem::path& path);

/// JSON lines: one header object with the metadata, then one
/// {"s","a","r","s_next"} object per tuple.
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

/// CSV with header "s,a,weight" (state-action) or "s,weight" (state).
std::string sa_distribution_csv(const SADistribution& d, int n_actions);
std::string state_distribution_csv(const StateDistribution& d);
SADistribution parse_sa_distribution_csv(const std::string& text, int n_states, int n_actions);
StateDistribution parse_state_distribution_csv(const std::string& text, int n_states);

/// Rows are Q members, columns W members.
std::string loss_table_csv(const Matrix& table);
std::string solve_report_text(const SolveReport& report);

}  // namespace vopr
