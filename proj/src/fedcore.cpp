#include "fedgai/fedcore.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <thread>

namespace fedgai {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kFedGai: return "fedgai";
    case Strategy::kFedAvg: return "fedavg";
    case Strategy::kFedProx: return "fedprox";
    case Strategy::kFedYogi: return "fedyogi";
  }
  fail("strategy_name: unknown strategy");
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "fedgai") return Strategy::kFedGai;
  if (name == "fedavg") return Strategy::kFedAvg;
  if (name == "fedprox") return Strategy::kFedProx;
  if (name == "fedyogi") return Strategy::kFedYogi;
  fail("unknown aggregation strategy '" + name +
       "' (expected fedgai, fedavg, fedprox, or fedyogi)");
}

namespace {

void check_same_table(const ParamSet& first, const ParamSet& other,
                      size_t which) {
  if (other.size() != first.size())
    fail("aggregate: upload " + std::to_string(which) + " has " +
         std::to_string(other.size()) + " entries, expected " +
         std::to_string(first.size()));
  for (size_t j = 0; j < first.size(); ++j) {
    const ParamEntry& a = first.entries()[j];
    const ParamEntry& b = other.entries()[j];
    if (a.name != b.name || a.role != b.role || a.kind != b.kind ||
        a.shape != b.shape)
      fail("aggregate: layer table mismatch at entry " + std::to_string(j) +
           " (" + a.name + " vs " + b.name + ")");
  }
}

}  // namespace

void parallel_for_indexed(size_t n, int jobs,
                          const std::function<void(size_t)>& fn) {
  if (n == 0) return;
  std::vector<std::exception_ptr> errors(n);
  int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&] {
      while (true) {
        size_t i = next.fetch_add(1);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (size_t i = 0; i < n; ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);
}

ParamSet aggregate_fedavg(const std::vector<ParamSet>& uploads,
                          const std::vector<double>* weights) {
  if (uploads.empty()) fail("aggregate: no uploads");
  if (weights) {
    if (weights->size() != uploads.size())
      fail("aggregate: got " + std::to_string(weights->size()) +
           " weights for " + std::to_string(uploads.size()) + " uploads");
    for (double w : *weights)
      if (!(w >= 0.0)) fail("aggregate: weights must be >= 0");
  }
  double weight_sum = 0.0;
  for (size_t i = 0; i < uploads.size(); ++i)
    weight_sum += weights ? (*weights)[i] : 1.0;
  if (!(weight_sum > 0.0)) fail("aggregate: weights must sum to > 0");

  const ParamSet& first = uploads[0];
  bool all_identical = true;
  for (size_t i = 1; i < uploads.size(); ++i) {
    check_same_table(first, uploads[i], i);
    if (all_identical)
      for (size_t j = 0; j < first.size(); ++j)
        if (uploads[i].entries()[j].values != first.entries()[j].values) {
          all_identical = false;
          break;
        }
  }
  // Identical uploads have the mean itself as the exact answer; skipping the
  // accumulate/divide keeps the fixed point bit-exact for any client count.
  if (all_identical) return first;

  ParamSet out;
  for (size_t j = 0; j < first.size(); ++j) {
    ParamEntry e = first.entries()[j];
    std::vector<double> acc(e.values.size(), 0.0);
    for (size_t i = 0; i < uploads.size(); ++i) {
      double w = weights ? (*weights)[i] : 1.0;
      const auto& vals = uploads[i].entries()[j].values;
      for (size_t k = 0; k < vals.size(); ++k) acc[k] += w * vals[k];
    }
    for (size_t k = 0; k < e.values.size(); ++k)
      e.values[k] = acc[k] / weight_sum;
    out.add(std::move(e));
  }
  return out;
}

ParamSet aggregate_fedgai(const std::vector<ParamSet>& uploads) {
  if (uploads.empty()) fail("aggregate: no uploads");
  for (const auto& u : uploads)
    for (const auto& e : u.entries()) {
      if (is_bn_kind(e.kind))
        fail("aggregate: BatchNorm parameters must remain local (got " +
             std::string(kind_name(e.kind)) + " entry '" + e.name + "')");
      if (e.role != ParamRole::kDiscriminator)
        fail("aggregate: fedgai exchanges discriminators only, rejected " +
             std::string(role_name(e.role)) + " entry '" + e.name + "'");
    }
  return aggregate_fedavg(uploads);
}

double fedprox_penalty(const ParamSet& local, const ParamSet& global,
                       double mu) {
  if (mu < 0.0) fail("fedprox: mu must be >= 0");
  if (local.size() != global.size())
    fail("fedprox: parameter tables differ in size (" +
         std::to_string(local.size()) + " vs " + std::to_string(global.size()) +
         ")");
  double acc = 0.0;
  for (size_t j = 0; j < local.size(); ++j) {
    const ParamEntry& a = local.entries()[j];
    const ParamEntry& b = global.entries()[j];
    if (a.name != b.name || a.shape != b.shape)
      fail("fedprox: mismatched entry " + a.name + " vs " + b.name);
    for (size_t k = 0; k < a.values.size(); ++k) {
      double d = a.values[k] - b.values[k];
      acc += d * d;
    }
  }
  return 0.5 * mu * acc;
}

ParamSet fedyogi_step(ServerOptState& state, const ParamSet& current,
                      const ParamSet& mean_upload) {
  check_same_table(current, mean_upload, 1);
  bool fresh = state.m.empty();
  if (fresh) {
    state.m.resize(current.size());
    state.v.resize(current.size());
  } else if (state.m.size() != current.size() ||
             state.v.size() != current.size()) {
    fail("fedyogi: optimizer state does not match the parameter table");
  }
  ParamSet out;
  for (size_t j = 0; j < current.size(); ++j) {
    const ParamEntry& cur = current.entries()[j];
    const ParamEntry& up = mean_upload.entries()[j];
    auto& m = state.m[j];
    auto& v = state.v[j];
    if (fresh) {
      m.assign(cur.values.size(), 0.0);
      v.assign(cur.values.size(), state.tau * state.tau);
    } else if (m.size() != cur.values.size()) {
      fail("fedyogi: state shape mismatch at " + cur.name);
    }
    ParamEntry ne = cur;
    for (size_t k = 0; k < cur.values.size(); ++k) {
      double delta = up.values[k] - cur.values[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * delta;
      double d2 = delta * delta;
      double sgn = v[k] > d2 ? 1.0 : (v[k] < d2 ? -1.0 : 0.0);
      v[k] -= (1.0 - state.beta2) * d2 * sgn;
      double upd = state.eta * m[k] / (std::sqrt(v[k]) + state.tau);
      if (upd != 0.0) ne.values[k] = cur.values[k] + upd;
    }
    out.add(std::move(ne));
  }
  return out;
}

std::vector<int> FusionSession::participants() const {
  std::vector<int> ids = requesters;
  ids.insert(ids.end(), style_sources.begin(), style_sources.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

FusionSession open_fusion_session(const std::vector<int>& requesters,
                                  const std::vector<int>& style_sources,
                                  Strategy strategy,
                                  const std::vector<int>& registered_ids,
                                  int max_rounds) {
  if (style_sources.empty())
    fail("fusion session: style_sources must be nonempty");
  if (max_rounds < 0) fail("fusion session: max_rounds must be >= 0");
  auto check_ids = [&](const std::vector<int>& ids, const char* what) {
    std::vector<int> seen;
    for (int id : ids) {
      if (std::find(registered_ids.begin(), registered_ids.end(), id) ==
          registered_ids.end())
        fail("fusion session: unknown client id " + std::to_string(id));
      if (std::find(seen.begin(), seen.end(), id) != seen.end())
        fail("fusion session: duplicate " + std::string(what) + " id " +
             std::to_string(id));
      seen.push_back(id);
    }
  };
  check_ids(requesters, "requester");
  check_ids(style_sources, "style source");
  FusionSession s;
  s.requesters = requesters;
  s.style_sources = style_sources;
  s.strategy = strategy;
  s.max_rounds = max_rounds;
  return s;
}

SessionStatus satisfaction_check(const FusionSession& session,
                                 const std::vector<double>& history) {
  if (session.round >= session.max_rounds) return SessionStatus::kConverged;
  const int w = session.rule.plateau_window;
  if (w >= 1 && history.size() >= static_cast<size_t>(w)) {
    bool flat = true;
    for (size_t i = history.size() - static_cast<size_t>(w) + 1;
         i < history.size(); ++i) {
      double prev = history[i - 1];
      double cur = history[i];
      double improvement = prev > 0.0 ? (prev - cur) / prev : 0.0;
      if (improvement >= session.rule.plateau_threshold) {
        flat = false;
        break;
      }
    }
    if (flat) return SessionStatus::kConverged;
  }
  return SessionStatus::kContinue;
}

namespace {

ParamSet fuse_uploads(FusionSession& session,
                      const std::vector<ParamSet>& uploads) {
  switch (session.strategy) {
    case Strategy::kFedGai:
      return aggregate_fedgai(uploads);
    case Strategy::kFedAvg:
    case Strategy::kFedProx:
      return aggregate_fedavg(uploads);
    case Strategy::kFedYogi: {
      ParamSet mean = aggregate_fedavg(uploads);
      // First round bootstraps the server model from the plain mean
      // (delta = 0), after which the adaptive update takes over.
      const ParamSet& current = session.fused.empty() ? mean : session.fused;
      return fedyogi_step(session.yogi, current, mean);
    }
  }
  fail("unreachable strategy");
}

}  // namespace

RoundRecord run_round(FusionSession& session,
                      const std::vector<ClientState*>& clients,
                      const PerceptualEncoder& enc, const LinkModel& link,
                      const TrainConfig& cfg, int jobs) {
  RoundRecord rec;
  rec.round = session.round + 1;
  rec.strategy = strategy_name(session.strategy);
  rec.n_iter = cfg.n_iter;
  rec.client_count = static_cast<int>(session.participants().size());
  try {
    cfg.validate();
    link.validate();
    if (jobs < 1) fail("round: jobs must be >= 1");
    TrainConfig local_cfg = cfg;
    if (session.strategy != Strategy::kFedProx) local_cfg.fedprox_mu = 0.0;

    auto find_client = [&](int id) -> ClientState* {
      for (ClientState* c : clients)
        if (c && c->client_id == id) return c;
      fail("round: unknown client id " + std::to_string(id));
    };
    std::vector<ClientState*> sources;
    sources.reserve(session.style_sources.size());
    for (int id : session.style_sources) sources.push_back(find_client(id));
    std::vector<ClientState*> participants;
    std::vector<ClientState*> requester_only;
    for (int id : session.participants()) {
      ClientState* c = find_client(id);
      participants.push_back(c);
      if (std::find(session.style_sources.begin(),
                    session.style_sources.end(),
                    id) == session.style_sources.end())
        requester_only.push_back(c);
    }

    // 1. Sources train locally and upload their discriminators.
    std::vector<ParamSet> uploads(sources.size());
    std::vector<uint64_t> macs(sources.size(), 0);
    parallel_for_indexed(sources.size(), jobs, [&](size_t i) {
      MacCounter::enable();
      ParamSet fused_in = session.fused.empty()
                              ? sources[i]->disc.export_params()
                              : session.fused;
      uploads[i] = local_round(*sources[i], enc, fused_in, local_cfg);
      macs[i] = MacCounter::disable();
    });

    // 2. Server-side fusion.
    session.fused = fuse_uploads(session, uploads);

    // 3. Broadcast; requester-only clients adapt their generator to the
    //    fused discriminator without contributing style.
    for (ClientState* c : participants) c->disc.load_params(session.fused);
    std::vector<uint64_t> ft_macs(requester_only.size(), 0);
    parallel_for_indexed(requester_only.size(), jobs, [&](size_t i) {
      MacCounter::enable();
      for (int e = 0; e < local_cfg.n_iter; ++e)
        generator_finetune_epoch(*requester_only[i], enc, local_cfg, true);
      ft_macs[i] = MacCounter::disable();
    });

    // 4. Price the exchange.
    LatencyBreakdown lat = round_latency(link, uploads, session.fused,
                                         static_cast<int>(participants.size()));
    for (const auto& u : uploads) rec.bytes_up += wire_bytes(u);
    rec.bytes_down = participants.size() * wire_bytes(session.fused);
    rec.upload_s = lat.upload_s;
    rec.aggregate_s = lat.aggregate_s;
    rec.download_s = lat.download_s;
    rec.wall_time_total = lat.upload_s + lat.aggregate_s + lat.download_s;
    uint64_t total_macs = 0;
    for (uint64_t v : macs) total_macs += v;
    for (uint64_t v : ft_macs) total_macs += v;
    rec.local_train_s =
        static_cast<double>(total_macs) / kReferenceMacsPerSecond;

    // 5. Quality across every participant, post-update.
    std::vector<double> fids(participants.size(), 0.0);
    std::vector<double> lpips(participants.size(), 0.0);
    parallel_for_indexed(participants.size(), jobs, [&](size_t i) {
      ClientState* c = participants[i];
      auto generated =
          generate_sketches(*c, enc, c->photos, local_cfg.batch_size);
      fids[i] = proxy_fid(enc, c->sketches, generated);
      lpips[i] = mean_perceptual_distance(enc, c->sketches, generated);
    });
    for (double v : fids) rec.mean_proxy_fid += v;
    for (double v : lpips) rec.mean_lpips_proxy += v;
    rec.mean_proxy_fid /= static_cast<double>(participants.size());
    rec.mean_lpips_proxy /= static_cast<double>(participants.size());

    session.round += 1;
    session.fid_history.push_back(rec.mean_proxy_fid);
  } catch (const Error& e) {
    rec.failed = true;
    rec.note = e.what();
  }
  return rec;
}

std::vector<RoundRecord> run_session(FusionSession& session,
                                     const std::vector<ClientState*>& clients,
                                     const PerceptualEncoder& enc,
                                     const LinkModel& link,
                                     const TrainConfig& cfg, int jobs) {
  std::vector<RoundRecord> records;
  while (satisfaction_check(session, session.fid_history) ==
         SessionStatus::kContinue) {
    RoundRecord rec = run_round(session, clients, enc, link, cfg, jobs);
    records.push_back(rec);
    if (rec.failed) break;
  }
  return records;
}

}  // namespace fedgai
