#include "fedgai/experiments.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "fedgai/metrics.hpp"
#include "fedgai/netsim.hpp"
#include "fedgai/trainers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fedgai {

namespace {

[[noreturn]] void fail_config(const std::string& msg) {
  throw ConfigError(msg);
}

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      fail_config("config: " + where + "unknown key '" + item.key() + "'");
}

double get_number(const json& j, const char* key, double def,
                  const std::string& where) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number()) fail_config("config: " + where + "'" + key +
                                  "' must be a number");
  return v.get<double>();
}

int get_int(const json& j, const char* key, int def,
            const std::string& where) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number_integer())
    fail_config("config: " + where + "'" + key + "' must be an integer");
  return v.get<int>();
}

uint64_t get_u64(const json& j, const char* key, uint64_t def,
                 const std::string& where) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<uint64_t>();
  if (v.is_number_integer() && v.get<int64_t>() >= 0)
    return static_cast<uint64_t>(v.get<int64_t>());
  fail_config("config: " + where + "'" + key +
              "' must be a nonnegative integer");
}

std::string get_string(const json& j, const char* key, std::string def,
                       const std::string& where) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_string())
    fail_config("config: " + where + "'" + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<int> get_int_list(const json& v, const std::string& where) {
  if (!v.is_array()) fail_config("config: " + where + " must be a list");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer())
      fail_config("config: " + where + " must hold integers");
    out.push_back(e.get<int>());
  }
  return out;
}

StyleProfile parse_profile(const json& j, size_t index) {
  const std::string where = "clients[" + std::to_string(index) + "]: ";
  if (!j.is_object()) fail_config("config: " + where + "must be an object");
  check_keys(j,
             {"stroke_width_px", "jitter_amplitude_px", "corner_rounding",
              "dash_probability", "detail_density", "seed"},
             where);
  StyleProfile p;
  p.stroke_width_px = get_number(j, "stroke_width_px", p.stroke_width_px,
                                 where);
  p.jitter_amplitude_px =
      get_number(j, "jitter_amplitude_px", p.jitter_amplitude_px, where);
  p.corner_rounding = get_number(j, "corner_rounding", p.corner_rounding,
                                 where);
  p.dash_probability = get_number(j, "dash_probability", p.dash_probability,
                                  where);
  p.detail_density = get_number(j, "detail_density", p.detail_density, where);
  p.seed = get_u64(j, "seed", p.seed, where);
  return p;
}

json profile_to_json(const StyleProfile& p) {
  return json{{"stroke_width_px", p.stroke_width_px},
              {"jitter_amplitude_px", p.jitter_amplitude_px},
              {"corner_rounding", p.corner_rounding},
              {"dash_probability", p.dash_probability},
              {"detail_density", p.detail_density},
              {"seed", p.seed}};
}

json config_json(const ExperimentConfig& cfg) {
  json clients = json::array();
  for (const auto& p : cfg.clients) clients.push_back(profile_to_json(p));
  return json{{"clients", clients},
              {"resolution", cfg.resolution},
              {"pairs_per_client", cfg.pairs_per_client},
              {"strategy", strategy_name(cfg.strategy)},
              {"rounds", cfg.rounds},
              {"n_iter", cfg.n_iter},
              {"batch_size", cfg.batch_size},
              {"learning_rate", cfg.learning_rate},
              {"teacher_epochs", cfg.teacher_epochs},
              {"distill_epochs", cfg.distill_epochs},
              {"beta", cfg.beta},
              {"mu", cfg.mu},
              {"seed", cfg.seed},
              {"output_dir", cfg.output_dir},
              {"fusion", json{{"requesters", cfg.fusion.requesters},
                              {"sources", cfg.fusion.sources}}}};
}

std::string path_under(const ExperimentConfig& cfg, const std::string& rel) {
  return (fs::path(cfg.output_dir) / rel).string();
}

void write_text_file(const std::string& path, const std::string& text) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("cannot open " + path + " for writing");
  f << text;
  if (!f) fail("write failed: " + path);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (clients.empty()) fail_config("config: 'clients' must list at least one profile");
  for (size_t i = 0; i < clients.size(); ++i) {
    try {
      clients[i].validate();
    } catch (const Error& e) {
      fail_config("config: clients[" + std::to_string(i) + "]: " + e.what());
    }
  }
  if (resolution <= 0 || resolution % 8 != 0)
    fail_config("config: 'resolution' must be a positive multiple of 8");
  if (pairs_per_client < 1)
    fail_config("config: 'pairs_per_client' must be >= 1");
  if (rounds < 0) fail_config("config: 'rounds' must be >= 0");
  if (n_iter < 0) fail_config("config: 'n_iter' must be >= 0");
  if (batch_size < 1) fail_config("config: 'batch_size' must be >= 1");
  if (learning_rate < 0) fail_config("config: 'learning_rate' must be >= 0");
  if (teacher_epochs < 0) fail_config("config: 'teacher_epochs' must be >= 0");
  if (distill_epochs < 0) fail_config("config: 'distill_epochs' must be >= 0");
  if (beta < 0) fail_config("config: 'beta' must be >= 0");
  if (mu < 0) fail_config("config: 'mu' must be >= 0");
  if (strategy == Strategy::kFedProx && !mu_set)
    fail_config("config: strategy 'fedprox' requires 'mu'");
  const int k = static_cast<int>(clients.size());
  auto check_ids = [&](const std::vector<int>& ids, const char* what) {
    std::set<int> seen;
    for (int id : ids) {
      if (id < 0 || id >= k)
        fail_config("config: fusion." + std::string(what) + " id " +
                    std::to_string(id) + " is out of range (have " +
                    std::to_string(k) + " clients)");
      if (!seen.insert(id).second)
        fail_config("config: fusion." + std::string(what) + " repeats id " +
                    std::to_string(id));
    }
  };
  check_ids(fusion.requesters, "requesters");
  check_ids(fusion.sources, "sources");
  if (fusion.sources.empty())
    fail_config("config: fusion.sources must be nonempty");
}

ExperimentConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail_config(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) fail_config("config: top level must be a JSON object");
  check_keys(j,
             {"clients", "resolution", "pairs_per_client", "strategy",
              "rounds", "n_iter", "batch_size", "learning_rate",
              "teacher_epochs", "distill_epochs", "beta", "mu", "seed",
              "output_dir", "fusion"},
             "");
  ExperimentConfig cfg;
  if (!j.contains("clients"))
    fail_config("config: 'clients' is required");
  if (!j.at("clients").is_array())
    fail_config("config: 'clients' must be a list of style profiles");
  for (size_t i = 0; i < j.at("clients").size(); ++i)
    cfg.clients.push_back(parse_profile(j.at("clients")[i], i));

  cfg.resolution = get_int(j, "resolution", cfg.resolution, "");
  cfg.pairs_per_client =
      get_int(j, "pairs_per_client", cfg.pairs_per_client, "");
  std::string strat =
      get_string(j, "strategy", strategy_name(cfg.strategy), "");
  try {
    cfg.strategy = strategy_from_name(strat);
  } catch (const Error& e) {
    fail_config(std::string("config: 'strategy': ") + e.what());
  }
  cfg.rounds = get_int(j, "rounds", cfg.rounds, "");
  cfg.n_iter = get_int(j, "n_iter", cfg.n_iter, "");
  cfg.batch_size = get_int(j, "batch_size", cfg.batch_size, "");
  cfg.learning_rate = get_number(j, "learning_rate", cfg.learning_rate, "");
  cfg.teacher_epochs = get_int(j, "teacher_epochs", cfg.teacher_epochs, "");
  cfg.distill_epochs = get_int(j, "distill_epochs", cfg.distill_epochs, "");
  cfg.beta = get_number(j, "beta", cfg.beta, "");
  cfg.mu = get_number(j, "mu", cfg.mu, "");
  cfg.mu_set = j.contains("mu");
  cfg.seed = get_u64(j, "seed", cfg.seed, "");
  cfg.output_dir = get_string(j, "output_dir", cfg.output_dir, "");

  for (int i = 0; i < static_cast<int>(cfg.clients.size()); ++i)
    cfg.fusion.sources.push_back(i);
  if (j.contains("fusion")) {
    const json& f = j.at("fusion");
    if (!f.is_object()) fail_config("config: 'fusion' must be an object");
    check_keys(f, {"requesters", "sources"}, "fusion: ");
    if (f.contains("requesters"))
      cfg.fusion.requesters = get_int_list(f.at("requesters"),
                                           "fusion.requesters");
    if (f.contains("sources"))
      cfg.fusion.sources = get_int_list(f.at("sources"), "fusion.sources");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_config("config: cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_json(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  return config_json(cfg).dump(2) + "\n";
}

void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                    int jobs) {
  json m{{"code_version", kCodeVersion},
         {"command", command},
         {"jobs", jobs},
         {"config", config_json(cfg)}};
  write_text_file(path_under(cfg, "manifest.json"), m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Shared world assembly
// ---------------------------------------------------------------------------

namespace {

TrainConfig train_config(const ExperimentConfig& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.learning_rate;
  t.n_iter = cfg.n_iter;
  t.batch_size = cfg.batch_size;
  t.seed = cfg.seed;
  t.weights.beta = cfg.beta;
  t.fedprox_mu = cfg.mu;
  return t;
}

std::vector<StylePair> client_dataset(const ExperimentConfig& cfg, int i) {
  return generate_dataset(cfg.clients[i], cfg.pairs_per_client, cfg.resolution,
                          /*style_id=*/i);
}

std::string ckpt_path(const ExperimentConfig& cfg, int client,
                      const std::string& role, int round) {
  return path_under(cfg, "checkpoints/" + std::to_string(client) + "_" + role +
                             "_" + std::to_string(round) + ".fgai");
}

// Clients plus the models they train. Teachers always exist; students appear
// when distilled checkpoints are on disk, and then carry their teacher as the
// frozen distillation target during federated epochs.
struct World {
  PerceptualEncoder enc;
  std::vector<ClientState> teachers;
  std::vector<ClientState> students;
  bool use_students = false;

  World() : enc(kSharedEncoderSeed) {}

  std::vector<ClientState*> participants() {
    std::vector<ClientState*> out;
    auto& pool = use_students ? students : teachers;
    out.reserve(pool.size());
    for (auto& c : pool) out.push_back(&c);
    return out;
  }
  std::string gen_role() const { return use_students ? "student_gen" : "gen"; }
  std::string disc_role() const {
    return use_students ? "student_disc" : "disc";
  }
};

uint64_t teacher_model_seed(const ExperimentConfig& cfg, int i) {
  return mix_seed(cfg.seed, static_cast<uint64_t>(i));
}

uint64_t student_model_seed(const ExperimentConfig& cfg, int i) {
  return mix_seed(cfg.seed, 0x5000 + static_cast<uint64_t>(i));
}

// Builds every client from its profile, then layers on whatever checkpoints
// exist: all-or-none per stage, so a half-written stage is an error rather
// than a silent mix of fresh and trained models.
World build_world(const ExperimentConfig& cfg) {
  World w;
  const int k = static_cast<int>(cfg.clients.size());
  w.teachers.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i)
    w.teachers.push_back(
        make_client(i, w.enc, client_dataset(cfg, i), teacher_model_seed(cfg, i)));

  int have_teacher = 0, have_student = 0;
  for (int i = 0; i < k; ++i) {
    if (fs::exists(ckpt_path(cfg, i, "gen", 0)) &&
        fs::exists(ckpt_path(cfg, i, "disc", 0)))
      ++have_teacher;
    if (fs::exists(ckpt_path(cfg, i, "student_gen", 0)) &&
        fs::exists(ckpt_path(cfg, i, "student_disc", 0)))
      ++have_student;
  }
  if (have_teacher != 0 && have_teacher != k)
    fail("checkpoints: found teacher checkpoints for " +
         std::to_string(have_teacher) + " of " + std::to_string(k) +
         " clients; run train-local for all clients or none");
  if (have_student != 0 && have_student != k)
    fail("checkpoints: found student checkpoints for " +
         std::to_string(have_student) + " of " + std::to_string(k) +
         " clients; run distill for all clients or none");

  if (have_teacher == k)
    for (int i = 0; i < k; ++i) {
      w.teachers[static_cast<size_t>(i)].gen.load_params(
          ParamSet::load(ckpt_path(cfg, i, "gen", 0)));
      w.teachers[static_cast<size_t>(i)].disc.load_params(
          ParamSet::load(ckpt_path(cfg, i, "disc", 0)));
    }
  if (have_student == k) {
    w.students.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
      ClientState s = make_student_of(w.teachers[static_cast<size_t>(i)],
                                      student_model_seed(cfg, i));
      s.gen.load_params(ParamSet::load(ckpt_path(cfg, i, "student_gen", 0)));
      s.disc.load_params(ParamSet::load(ckpt_path(cfg, i, "student_disc", 0)));
      w.students.push_back(std::move(s));
    }
    for (int i = 0; i < k; ++i)
      w.students[static_cast<size_t>(i)].kd_teacher =
          &w.teachers[static_cast<size_t>(i)];
    w.use_students = true;
  }
  return w;
}

// Runs a session round by round, checkpointing participant discriminators
// after every round and generators at the end, and writes records/rounds.csv.
std::vector<RoundRecord> run_and_record(const ExperimentConfig& cfg, World& w,
                                        FusionSession& session, int jobs) {
  fs::create_directories(path_under(cfg, "records"));
  fs::create_directories(path_under(cfg, "checkpoints"));
  TrainConfig tcfg = train_config(cfg);
  auto clients = w.participants();
  auto by_id = [&](int id) -> ClientState* {
    for (ClientState* c : clients)
      if (c->client_id == id) return c;
    fail("no client with id " + std::to_string(id));
  };
  std::vector<RoundRecord> records;
  while (satisfaction_check(session, session.fid_history) ==
         SessionStatus::kContinue) {
    RoundRecord rec = run_round(session, clients, w.enc, LinkModel{}, tcfg,
                                jobs);
    records.push_back(rec);
    if (rec.failed) {
      emit_report(records, path_under(cfg, "records/rounds.csv"));
      fail("round " + std::to_string(rec.round) + " failed: " + rec.note);
    }
    for (int id : session.participants())
      by_id(id)->disc.export_params().save(
          ckpt_path(cfg, id, w.disc_role(), session.round));
  }
  for (int id : session.participants())
    by_id(id)->gen.export_params().save(
        ckpt_path(cfg, id, w.gen_role(), session.round));
  emit_report(records, path_under(cfg, "records/rounds.csv"));
  return records;
}

std::vector<int> all_ids(const ExperimentConfig& cfg) {
  std::vector<int> ids(cfg.clients.size());
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  return ids;
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_gen_data(const ExperimentConfig& cfg) {
  for (size_t i = 0; i < cfg.clients.size(); ++i)
    save_dataset(path_under(cfg, "data/client_" + std::to_string(i)),
                 client_dataset(cfg, static_cast<int>(i)));
}

void cmd_train_local(const ExperimentConfig& cfg, int jobs) {
  World w = build_world(cfg);
  TrainConfig tcfg = train_config(cfg);
  parallel_for_indexed(w.teachers.size(), jobs, [&](size_t i) {
    for (int e = 0; e < cfg.teacher_epochs; ++e)
      train_teacher_epoch(w.teachers[i], w.enc, tcfg);
  });
  fs::create_directories(path_under(cfg, "checkpoints"));
  for (size_t i = 0; i < w.teachers.size(); ++i) {
    const int id = static_cast<int>(i);
    w.teachers[i].gen.export_params().save(ckpt_path(cfg, id, "gen", 0));
    w.teachers[i].disc.export_params().save(ckpt_path(cfg, id, "disc", 0));
  }
}

void cmd_distill(const ExperimentConfig& cfg, int jobs) {
  World w = build_world(cfg);
  const int k = static_cast<int>(w.teachers.size());
  for (int i = 0; i < k; ++i)
    if (!fs::exists(ckpt_path(cfg, i, "gen", 0)) ||
        !fs::exists(ckpt_path(cfg, i, "disc", 0)))
      fail("distill: missing teacher checkpoints for client " +
           std::to_string(i) + "; run train-local first");
  TrainConfig tcfg = train_config(cfg);
  std::vector<ClientState> students;
  students.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i)
    students.push_back(make_student_of(w.teachers[static_cast<size_t>(i)],
                                       student_model_seed(cfg, i)));
  parallel_for_indexed(students.size(), jobs, [&](size_t i) {
    distill_student(w.teachers[i], students[i], w.enc, tcfg,
                    cfg.distill_epochs);
  });
  fs::create_directories(path_under(cfg, "checkpoints"));
  for (size_t i = 0; i < students.size(); ++i) {
    const int id = static_cast<int>(i);
    students[i].gen.export_params().save(
        ckpt_path(cfg, id, "student_gen", 0));
    students[i].disc.export_params().save(
        ckpt_path(cfg, id, "student_disc", 0));
  }
}

std::vector<RoundRecord> cmd_fed_run(const ExperimentConfig& cfg, int jobs) {
  World w = build_world(cfg);
  FusionSession session = open_fusion_session({}, all_ids(cfg), cfg.strategy,
                                              all_ids(cfg), cfg.rounds);
  return run_and_record(cfg, w, session, jobs);
}

std::vector<RoundRecord> cmd_fuse(const ExperimentConfig& cfg, int jobs) {
  World w = build_world(cfg);
  FusionSession session =
      open_fusion_session(cfg.fusion.requesters, cfg.fusion.sources,
                          cfg.strategy, all_ids(cfg), cfg.rounds);
  return run_and_record(cfg, w, session, jobs);
}

std::vector<RoundRecord> load_report(const std::string& csv_path) {
  std::ifstream f(csv_path, std::ios::binary);
  if (!f) fail("report: cannot read " + csv_path);
  std::string line;
  if (!std::getline(f, line) || line != kReportHeader)
    fail("report: " + csv_path + " does not carry the round-record header");
  std::vector<RoundRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) fields.push_back(cell);
    if (fields.size() != 12)
      fail("report: malformed row in " + csv_path + ": " + line);
    RoundRecord r;
    r.round = std::stoi(fields[0]);
    r.client_count = std::stoi(fields[1]);
    r.strategy = fields[2];
    r.n_iter = std::stoi(fields[3]);
    r.bytes_up = std::stoull(fields[4]);
    r.bytes_down = std::stoull(fields[5]);
    r.upload_s = std::stod(fields[6]);
    r.aggregate_s = std::stod(fields[7]);
    r.download_s = std::stod(fields[8]);
    r.mean_proxy_fid = std::stod(fields[9]);
    r.mean_lpips_proxy = std::stod(fields[10]);
    r.wall_time_total = std::stod(fields[11]);
    out.push_back(r);
  }
  return out;
}

void cmd_report(const ExperimentConfig& cfg) {
  std::vector<std::string> csvs;
  if (fs::exists(cfg.output_dir))
    for (const auto& entry :
         fs::recursive_directory_iterator(cfg.output_dir))
      if (entry.is_regular_file() && entry.path().filename() == "rounds.csv" &&
          entry.path().parent_path().filename() == "records")
        csvs.push_back(entry.path().string());
  std::sort(csvs.begin(), csvs.end());
  std::vector<RoundRecord> merged;
  for (const auto& path : csvs) {
    auto rows = load_report(path);
    merged.insert(merged.end(), rows.begin(), rows.end());
  }
  fs::create_directories(path_under(cfg, "report"));
  emit_report(merged, path_under(cfg, "report/combined.csv"));
  emit_fid_chart(merged, path_under(cfg, "report/fid_chart.svg"));
}

void cmd_sweep_niter(const ExperimentConfig& cfg, int jobs) {
  std::string summary = "n_iter,rounds_run,final_mean_proxy_fid\n";
  for (int v : {2, 5, 8, 11}) {
    ExperimentConfig sub = cfg;
    sub.n_iter = v;
    sub.output_dir = path_under(cfg, "niter_" + std::to_string(v));
    write_manifest(sub, "fed-run", jobs);
    auto records = cmd_fed_run(sub, jobs);
    summary += std::to_string(v) + "," + std::to_string(records.size()) + ",";
    if (!records.empty())
      summary += format_g17(records.back().mean_proxy_fid);
    summary += "\n";
  }
  write_text_file(path_under(cfg, "report/sweep_niter.csv"), summary);
}

void cmd_sweep_clients(const ExperimentConfig& cfg, int jobs) {
  std::string summary =
      "clients,rounds_run,final_mean_proxy_fid,round1_bytes_up\n";
  for (int k : {2, 4, 6, 8}) {
    ExperimentConfig sub = cfg;
    sub.clients.clear();
    for (int i = 0; i < k; ++i) {
      StyleProfile p = cfg.clients[static_cast<size_t>(i) %
                                   cfg.clients.size()];
      p.seed += 1000ull * (static_cast<uint64_t>(i) / cfg.clients.size());
      sub.clients.push_back(p);
    }
    sub.fusion.requesters.clear();
    sub.fusion.sources = all_ids(sub);
    sub.output_dir = path_under(cfg, "clients_" + std::to_string(k));
    write_manifest(sub, "fed-run", jobs);
    auto records = cmd_fed_run(sub, jobs);
    summary += std::to_string(k) + "," + std::to_string(records.size()) + ",";
    if (!records.empty())
      summary += format_g17(records.back().mean_proxy_fid) + "," +
                 std::to_string(records.front().bytes_up);
    else
      summary += ",0";
    summary += "\n";
  }
  write_text_file(path_under(cfg, "report/sweep_clients.csv"), summary);
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {
      "gen-data", "train-local", "distill",     "fed-run",
      "fuse",     "report",      "sweep-niter", "sweep-clients"};
  return names;
}

int run_command(const std::string& command, const std::string& config_path,
                const CliOverrides& overrides) {
  try {
    const auto& names = command_names();
    if (std::find(names.begin(), names.end(), command) == names.end())
      fail_config("unknown command '" + command + "'");
    if (overrides.jobs < 1) fail_config("--jobs must be >= 1");
    ExperimentConfig cfg = load_config(config_path);
    if (overrides.seed) cfg.seed = *overrides.seed;
    if (overrides.strategy) {
      try {
        cfg.strategy = strategy_from_name(*overrides.strategy);
      } catch (const Error& e) {
        fail_config(std::string("--strategy: ") + e.what());
      }
    }
    if (cfg.output_dir.empty())
      if (const char* env = std::getenv("FEDGAI_OUTPUT")) cfg.output_dir = env;
    if (cfg.output_dir.empty())
      fail_config(
          "config: 'output_dir' is not set (set it in the config or via "
          "FEDGAI_OUTPUT)");
    cfg.validate();

    fs::create_directories(cfg.output_dir);
    write_manifest(cfg, command, overrides.jobs);
    if (command == "gen-data")
      cmd_gen_data(cfg);
    else if (command == "train-local")
      cmd_train_local(cfg, overrides.jobs);
    else if (command == "distill")
      cmd_distill(cfg, overrides.jobs);
    else if (command == "fed-run")
      cmd_fed_run(cfg, overrides.jobs);
    else if (command == "fuse")
      cmd_fuse(cfg, overrides.jobs);
    else if (command == "report")
      cmd_report(cfg);
    else if (command == "sweep-niter")
      cmd_sweep_niter(cfg, overrides.jobs);
    else if (command == "sweep-clients")
      cmd_sweep_clients(cfg, overrides.jobs);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fedgai
