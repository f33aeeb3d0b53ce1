#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedgai/fedcore.hpp"
#include "fedgai/synthdata.hpp"

namespace fedgai {

// ---------------------------------------------------------------------------
// Experiment configuration, persistence layout, and the scripted runs behind
// the command-line tool. Commands only ever write under output_dir:
//   output_dir/data/client_<i>/...         PPM/PGM pairs + dataset manifest
//   output_dir/checkpoints/<c>_<role>_<r>.fgai
//   output_dir/records/rounds.csv           per-round records (pinned schema)
//   output_dir/report/...                   merged CSVs, sweep tables, charts
//   output_dir/manifest.json                resolved config, command, version
// ---------------------------------------------------------------------------

inline constexpr const char* kCodeVersion = "0.1.0";

// All clients and metrics share one frozen perceptual encoder.
inline constexpr uint64_t kSharedEncoderSeed = 0x5eed;

// Configuration-shape problems (bad JSON, unknown keys, out-of-range fields).
// The CLI maps these to exit code 2; all other errors exit 1.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct FusionSpec {
  std::vector<int> requesters;  // receive the fused model, upload nothing
  std::vector<int> sources;     // train and upload; default: every client
};

struct ExperimentConfig {
  std::vector<StyleProfile> clients;  // one profile per client, id = index
  int resolution = 32;                // positive multiple of 8
  int pairs_per_client = 32;
  Strategy strategy = Strategy::kFedGai;
  int rounds = 11;          // federated round cap T
  int n_iter = 2;           // local epochs per round
  int batch_size = 8;
  double learning_rate = 2e-4;
  int teacher_epochs = 10;  // train-local budget
  int distill_epochs = 10;  // distill budget
  double beta = 0.1;        // decorrelation weight in federated epochs
  double mu = 0.0;          // proximal weight, used by the fedprox strategy
  bool mu_set = false;      // whether the config spelled mu out explicitly
  uint64_t seed = 0;
  std::string output_dir;
  FusionSpec fusion;

  void validate() const;  // throws ConfigError with the offending field
};

// Parses a JSON object into a fully resolved config. Unknown keys anywhere
// (top level, client profiles, fusion block) and wrong types are errors.
// fusion.sources defaults to every client when absent.
ExperimentConfig parse_config_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Resolved config as pretty JSON (sorted keys, trailing newline); feeding it
// back through parse_config_json reproduces the same config.
std::string config_to_json(const ExperimentConfig& cfg);

// Writes output_dir/manifest.json: code version, command, jobs, and the
// resolved config. No timestamps, so reruns are byte-identical.
void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                    int jobs);

// Commands. Each takes a validated config and throws on failure.
void cmd_gen_data(const ExperimentConfig& cfg);
void cmd_train_local(const ExperimentConfig& cfg, int jobs);
void cmd_distill(const ExperimentConfig& cfg, int jobs);
// Classic federated run: every client trains and uploads. Returns the round
// records it wrote to records/rounds.csv.
std::vector<RoundRecord> cmd_fed_run(const ExperimentConfig& cfg, int jobs);
// Fusion session restricted to cfg.fusion requesters/sources.
std::vector<RoundRecord> cmd_fuse(const ExperimentConfig& cfg, int jobs);
// Merges every records/rounds.csv found under output_dir into
// report/combined.csv (same schema) and draws report/fid_chart.svg.
void cmd_report(const ExperimentConfig& cfg);
// Fresh federated runs at n_iter in {2, 5, 8, 11} under output_dir/niter_<v>,
// summarized in report/sweep_niter.csv.
void cmd_sweep_niter(const ExperimentConfig& cfg, int jobs);
// Fresh federated runs at 2, 4, 6, 8 clients under output_dir/clients_<k>,
// summarized in report/sweep_clients.csv. The client list is extended
// cyclically with shifted dataset seeds when the config lists fewer profiles.
void cmd_sweep_clients(const ExperimentConfig& cfg, int jobs);

// Reads a CSV produced by emit_report back into records.
std::vector<RoundRecord> load_report(const std::string& csv_path);

struct CliOverrides {
  std::optional<uint64_t> seed;      // --seed, replaces config seed
  std::optional<std::string> strategy;  // --strategy, replaces config strategy
  int jobs = 1;                      // --jobs
};

const std::vector<std::string>& command_names();

// Full pipeline behind the CLI: load the config, apply overrides, fall back
// to the FEDGAI_OUTPUT environment variable when output_dir is unset,
// validate, write the manifest, and dispatch. Returns the process exit code:
// 0 success, 1 runtime failure, 2 invalid config (message on stderr).
int run_command(const std::string& command, const std::string& config_path,
                const CliOverrides& overrides);

}  // namespace fedgai
