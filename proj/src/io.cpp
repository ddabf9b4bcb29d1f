#include "vopr/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "vopr/errors.hpp"

namespace vopr {

namespace {

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ValidationError(std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

void expect_format(const Json& j, const char* format) {
  if (j.value("format", std::string()) != format) {
    throw ValidationError(std::string("expected format '") + format + "'");
  }
}

std::vector<double> flat_values(const Json& j, std::size_t expected, const char* what) {
  auto v = j.get<std::vector<double>>();
  if (v.size() != expected) {
    std::ostringstream msg;
    msg << what << ": expected " << expected << " values, got " << v.size();
    throw ValidationError(msg.str());
  }
  return v;
}

std::vector<double> flatten(const Table& t) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(t.size()));
  for (Eigen::Index s = 0; s < t.rows(); ++s)
    for (Eigen::Index a = 0; a < t.cols(); ++a) out.push_back(t(s, a));
  return out;
}

Table to_table(const std::vector<double>& v, int rows, int cols) {
  Table t(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) t(r, c) = v[static_cast<std::size_t>(r) * cols + c];
  return t;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  return out;
}

std::vector<std::vector<std::string>> csv_body(const std::string& text, std::size_t columns) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    auto cells = split(line, ',');
    if (cells.size() != columns) throw ValidationError("malformed CSV row: " + line);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  double x = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ValidationError("not a number: '" + text + "'");
  }
  return x;
}

Json mdp_to_json(const TabularMDP& mdp) {
  std::vector<double> transition;
  transition.reserve(static_cast<std::size_t>(mdp.transition.size()));
  for (Eigen::Index r = 0; r < mdp.transition.rows(); ++r)
    for (Eigen::Index c = 0; c < mdp.transition.cols(); ++c) transition.push_back(mdp.transition(r, c));
  return {{"format", "vopr-mdp"},
          {"n_states", mdp.n_states},
          {"n_actions", mdp.n_actions},
          {"gamma", mdp.gamma},
          {"r_max", mdp.r_max},
          {"transition", transition},
          {"reward", flatten(mdp.reward)},
          {"initial_dist", std::vector<double>(mdp.initial_dist.data(),
                                               mdp.initial_dist.data() + mdp.initial_dist.size())}};
}

TabularMDP mdp_from_json(const Json& j) {
  expect_format(j, "vopr-mdp");
  TabularMDP mdp;
  mdp.n_states = field(j, "n_states").get<int>();
  mdp.n_actions = field(j, "n_actions").get<int>();
  if (mdp.n_states < 1 || mdp.n_actions < 1) throw ValidationError("MDP sizes must be positive");
  const auto S = static_cast<std::size_t>(mdp.n_states);
  const auto A = static_cast<std::size_t>(mdp.n_actions);
  mdp.gamma = field(j, "gamma").get<double>();
  mdp.r_max = field(j, "r_max").get<double>();
  mdp.transition = to_table(flat_values(field(j, "transition"), S * A * S, "transition"),
                            mdp.n_states * mdp.n_actions, mdp.n_states);
  mdp.reward = to_table(flat_values(field(j, "reward"), S * A, "reward"), mdp.n_states,
                        mdp.n_actions);
  const auto mu0 = flat_values(field(j, "initial_dist"), S, "initial_dist");
  mdp.initial_dist = Eigen::Map<const Vector>(mu0.data(), mdp.n_states);
  return validate_mdp(std::move(mdp));
}

Json table_to_json(const Table& t) { return flatten(t); }

Table table_from_json(const Json& j, int n_states, int n_actions) {
  return to_table(flat_values(j, static_cast<std::size_t>(n_states) * n_actions, "table"),
                  n_states, n_actions);
}

Json policy_to_json(const Policy& pi) {
  return {{"format", "vopr-policy"},
          {"n_states", pi.n_states()},
          {"n_actions", pi.n_actions()},
          {"probs", flatten(pi.probs)}};
}

Policy policy_from_json(const Json& j) {
  expect_format(j, "vopr-policy");
  const int S = field(j, "n_states").get<int>();
  const int A = field(j, "n_actions").get<int>();
  Policy pi{table_from_json(field(j, "probs"), S, A)};
  validate_policy(pi, S, A);
  return pi;
}

Json class_to_json(const FiniteFunctionClass& cls) {
  Json members = Json::array();
  for (const auto& m : cls.members) members.push_back(flatten(m));
  const int S = cls.members.empty() ? 0 : static_cast<int>(cls.members.front().rows());
  const int A = cls.members.empty() ? 0 : static_cast<int>(cls.members.front().cols());
  return {{"format", "vopr-class"}, {"kind", to_string(cls.kind)}, {"n_states", S},
          {"n_actions", A},         {"bound", cls.bound},           {"members", members}};
}

FiniteFunctionClass class_from_json(const Json& j) {
  expect_format(j, "vopr-class");
  FiniteFunctionClass cls;
  cls.kind = parse_function_kind(field(j, "kind").get<std::string>());
  cls.bound = field(j, "bound").get<double>();
  const int S = field(j, "n_states").get<int>();
  const int A = field(j, "n_actions").get<int>();
  for (const auto& m : field(j, "members")) cls.members.push_back(table_from_json(m, S, A));
  return cls;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void save_mdp(const std::filesystem::path& path, const TabularMDP& mdp) {
  write_json_file(path, mdp_to_json(mdp));
}

TabularMDP load_mdp(const std::filesystem::path& path) {
  return mdp_from_json(read_json_file(path));
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const Json header = {
      {"format", "vopr-dataset"},
      {"mdp_hash", ds.meta.mdp_hash},
      {"mu_data", std::vector<double>(ds.meta.mu_data.data(),
                                      ds.meta.mu_data.data() + ds.meta.mu_data.size())},
      {"pi_b", policy_to_json(Policy{ds.meta.pi_b})},
      {"seed", ds.meta.seed},
      {"n", ds.meta.n}};
  out << header.dump() << "\n";
  for (const auto& t : ds.tuples) {
    out << Json{{"s", t.s}, {"a", t.a}, {"r", t.r}, {"s_next", t.s_next}}.dump() << "\n";
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
  Dataset ds;
  try {
    const Json header = Json::parse(line);
    expect_format(header, "vopr-dataset");
    ds.meta.mdp_hash = field(header, "mdp_hash").get<std::uint64_t>();
    const auto mu = field(header, "mu_data").get<std::vector<double>>();
    ds.meta.mu_data = Eigen::Map<const Vector>(mu.data(), static_cast<Eigen::Index>(mu.size()));
    ds.meta.pi_b = policy_from_json(field(header, "pi_b")).probs;
    ds.meta.seed = field(header, "seed").get<std::uint64_t>();
    ds.meta.n = field(header, "n").get<std::size_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const Json t = Json::parse(line);
      ds.tuples.push_back({field(t, "s").get<int>(), field(t, "a").get<int>(),
                           field(t, "r").get<double>(), field(t, "s_next").get<int>()});
    }
  } catch (const Json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (ds.tuples.size() != ds.meta.n) {
    throw ValidationError(path.string() + ": header declares " + std::to_string(ds.meta.n) +
                          " tuples, found " + std::to_string(ds.tuples.size()));
  }
  return ds;
}

std::string sa_distribution_csv(const SADistribution& d, int n_actions) {
  std::ostringstream out;
  out << "s,a,weight\n";
  for (Eigen::Index i = 0; i < d.weights.size(); ++i) {
    out << i / n_actions << "," << i % n_actions << "," << format_double(d.weights[i]) << "\n";
  }
  return out.str();
}

std::string state_distribution_csv(const StateDistribution& d) {
  std::ostringstream out;
  out << "s,weight\n";
  for (Eigen::Index s = 0; s < d.weights.size(); ++s) {
    out << s << "," << format_double(d.weights[s]) << "\n";
  }
  return out.str();
}

SADistribution parse_sa_distribution_csv(const std::string& text, int n_states, int n_actions) {
  Vector w = Vector::Zero(static_cast<Eigen::Index>(n_states) * n_actions);
  for (const auto& row : csv_body(text, 3)) {
    const int s = std::stoi(row[0]);
    const int a = std::stoi(row[1]);
    if (s < 0 || s >= n_states || a < 0 || a >= n_actions) {
      throw ValidationError("distribution entry out of range: (" + row[0] + ", " + row[1] + ")");
    }
    w[static_cast<Eigen::Index>(s) * n_actions + a] = parse_double(row[2]);
  }
  SADistribution d{w};
  validate_distribution(d, w.size());
  return d;
}

StateDistribution parse_state_distribution_csv(const std::string& text, int n_states) {
  Vector w = Vector::Zero(n_states);
  for (const auto& row : csv_body(text, 2)) {
    const int s = std::stoi(row[0]);
    if (s < 0 || s >= n_states) throw ValidationError("distribution state out of range: " + row[0]);
    w[s] = parse_double(row[1]);
  }
  StateDistribution d{w};
  validate_distribution(d, n_states);
  return d;
}

std::string loss_table_csv(const Matrix& table) {
  std::ostringstream out;
  out << "q";
  for (Eigen::Index j = 0; j < table.cols(); ++j) out << ",w" << j;
  out << "\n";
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < table.cols(); ++j) out << "," << format_double(table(i, j));
    out << "\n";
  }
  return out.str();
}

std::string solve_report_text(const SolveReport& report) {
  std::ostringstream out;
  out << "q_index: " << report.q_index << "\n";
  out << "w_best_response: " << report.w_index << "\n";
  out << "minimax_value: "
      << format_double(report.loss_table(static_cast<Eigen::Index>(report.q_index),
                                         static_cast<Eigen::Index>(report.w_index)))
      << "\n";
  out << "beta_index: " << report.beta_index << "\n";
  out << "beta_objective:";
  for (Eigen::Index k = 0; k < report.beta_objective.size(); ++k)
    out << " " << format_double(report.beta_objective[k]);
  out << "\n";
  out << "epsilon_stat: " << format_double(report.epsilon_stat) << "\n";
  out << "bound: " << format_double(report.bound) << "\n";
  out << "pi_hat:\n";
  for (Eigen::Index s = 0; s < report.pi_hat.probs.rows(); ++s) {
    out << "  " << s << ":";
    for (Eigen::Index a = 0; a < report.pi_hat.probs.cols(); ++a)
      out << " " << format_double(report.pi_hat.probs(s, a));
    out << "\n";
  }
  return out.str();
}

}  // namespace vopr
