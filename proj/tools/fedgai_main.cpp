#include <CLI11.hpp>

#include <optional>
#include <string>

#include "fedgai/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"federated sketch-style fusion workbench"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  std::optional<uint64_t> seed;
  app.add_option("--seed", seed, "override the config seed");
  std::optional<std::string> strategy;
  app.add_option("--strategy", strategy,
                 "override the aggregation strategy "
                 "(fedgai|fedavg|fedprox|fedyogi)");
  int jobs = 1;
  app.add_option("--jobs", jobs, "worker threads for per-client work");

  // Flags may appear before or after the subcommand name.
  for (auto* sub :
       {app.add_subcommand("gen-data", "write every client's dataset to disk"),
        app.add_subcommand("train-local", "train one teacher GAN per client"),
        app.add_subcommand("distill", "distill each teacher into a student"),
        app.add_subcommand("fed-run",
                           "run a federated experiment over all clients"),
        app.add_subcommand("fuse",
                           "run a fusion session over the configured "
                           "requesters and style sources"),
        app.add_subcommand("report",
                           "merge round CSVs under output_dir and chart"),
        app.add_subcommand("sweep-niter",
                           "federated runs at n_iter 2, 5, 8, 11"),
        app.add_subcommand("sweep-clients",
                           "federated runs at 2, 4, 6, 8 clients")})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage problems share the invalid-config exit code; --help stays 0.
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  fedgai::CliOverrides overrides;
  overrides.seed = seed;
  overrides.strategy = strategy;
  overrides.jobs = jobs;
  return fedgai::run_command(app.get_subcommands().front()->get_name(),
                             config_path, overrides);
}
