#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hiertrade/config.hpp"
#include "hiertrade/errors.hpp"
#include "hiertrade/experiments.hpp"

namespace {

struct CliArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out_dir;
  std::string case_name;
};

void add_common_flags(CLI::App* cmd, CliArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "override the run seed");
  cmd->add_option("--jobs", args.jobs, "worker threads for sweep training");
  cmd->add_option("--out", args.out_dir, "output directory");
}

hiertrade::RunConfig resolve(const CliArgs& args) {
  hiertrade::CliOverrides overrides;
  overrides.seed = args.seed;
  overrides.jobs = args.jobs;
  overrides.out_dir = args.out_dir;
  if (!overrides.out_dir) {
    if (const char* env = std::getenv("OUTPUT_DIR"); env && *env)
      overrides.out_dir = std::string(env);
  }
  return hiertrade::load_config(args.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical wind-portfolio trading experiments"};
  app.require_subcommand(1);

  CliArgs args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  CLI::App* fit = app.add_subcommand("fit", "fit the base forecasters");
  CLI::App* train = app.add_subcommand("train", "train the reconciliation models");
  CLI::App* sweep = app.add_subcommand("sweep", "evaluate every strategy over the weight grid");
  CLI::App* run_case = app.add_subcommand("case", "run a preconfigured experiment");
  run_case->add_option("name", args.case_name, "case1 | case2 | casestudy")->required();
  CLI::App* verify = app.add_subcommand("verify", "run the randomized invariant suites");
  for (CLI::App* cmd : {synth, fit, train, sweep, run_case, verify})
    add_common_flags(cmd, args);

  CLI11_PARSE(app, argc, argv);

  try {
    hiertrade::RunConfig cfg = resolve(args);
    if (synth->parsed()) return hiertrade::cmd_synth(cfg);
    if (fit->parsed()) return hiertrade::cmd_fit(cfg);
    if (train->parsed()) return hiertrade::cmd_train(cfg);
    if (sweep->parsed()) return hiertrade::cmd_sweep(cfg);
    if (run_case->parsed()) return hiertrade::cmd_case(cfg, args.case_name);
    if (verify->parsed()) return hiertrade::cmd_verify(cfg);
  } catch (const hiertrade::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const hiertrade::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const hiertrade::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
