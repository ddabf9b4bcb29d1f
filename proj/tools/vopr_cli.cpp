#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "vopr/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Tabular offline RL lab: minimax value estimation with policy-ratio extraction"};
  app.require_subcommand(1);

  struct Args {
    std::string config;
    std::string out = ".";
  };
  Args args;
  const char* names[] = {"gen-mdp", "counterexample", "sample", "solve", "verify", "experiment"};
  const char* help[] = {
      "Build an MDP from a config and write it with its optimal solution",
      "Reproduce the tie-break failure on the four-state chain",
      "Sample an offline dataset from an MDP",
      "Run the two-stage solver for one seed and N",
      "Evaluate concentrability coefficients and bound checks",
      "Sweep seeds and N, appending rows to a CSV",
  };
  for (int i = 0; i < 6; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], help[i]);
    sub->add_option("--config", args.config, "JSON config file")->required();
    sub->add_option("--out", args.out, "Output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : vopr::kExitConfig;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  return vopr::run_command(name, args.config, args.out, std::cout, std::cerr);
}
