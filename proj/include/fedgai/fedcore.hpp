#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedgai/metrics.hpp"
#include "fedgai/netsim.hpp"
#include "fedgai/params.hpp"
#include "fedgai/trainers.hpp"

namespace fedgai {

// ---------------------------------------------------------------------------
// Server-side federation: aggregation strategies over tagged parameter sets,
// client-selection fusion sessions, and round orchestration. Session and
// server-optimizer state belong to the orchestration thread; client work may
// fan out to worker threads since clients share nothing mutable.
// ---------------------------------------------------------------------------

// Runs fn(0..n-1) on up to `jobs` worker threads. Every index runs exactly
// once and should write only its own output slots, so the schedule cannot
// change results; if any indices throw, the lowest one is rethrown.
void parallel_for_indexed(size_t n, int jobs,
                          const std::function<void(size_t)>& fn);

enum class Strategy { kFedGai, kFedAvg, kFedProx, kFedYogi };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

// Entrywise weighted mean (uniform when weights is null). All uploads must
// share one layer table: same entry order, names, roles, kinds, and shapes.
ParamSet aggregate_fedavg(const std::vector<ParamSet>& uploads,
                          const std::vector<double>* weights = nullptr);

// The BatchNorm-excluding discriminator-only strategy: refuses any BN-kind or
// non-discriminator entry outright, then averages uniformly.
ParamSet aggregate_fedgai(const std::vector<ParamSet>& uploads);

// (mu/2) * sum of squared distances between matching entries.
double fedprox_penalty(const ParamSet& local, const ParamSet& global,
                       double mu);

// Server-side adaptive optimizer state. Moment buffers mirror the aggregated
// layer table and are sized on the first step.
struct ServerOptState {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eta = 1e-2;
  double tau = 1e-3;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;  // initialized to tau^2, stays >= 0
};

// delta = mean_upload - current; m <- b1*m + (1-b1)*delta;
// v <- v - (1-b2)*delta^2*sign(v - delta^2); new = current + eta*m/(sqrt(v)+tau).
ParamSet fedyogi_step(ServerOptState& state, const ParamSet& current,
                      const ParamSet& mean_upload);

struct SatisfactionRule {
  double plateau_threshold = 0.01;  // relative improvement below this is flat
  int plateau_window = 3;           // trailing values that must all be flat
};

struct FusionSession {
  std::vector<int> requesters;
  std::vector<int> style_sources;
  Strategy strategy = Strategy::kFedGai;
  int round = 0;       // completed rounds t
  int max_rounds = 11; // T
  SatisfactionRule rule;
  ServerOptState yogi;
  ParamSet fused;                    // empty until the first aggregation
  std::vector<double> fid_history;   // mean proxy-FID per completed round

  // requesters ∪ sources, sorted and deduplicated.
  std::vector<int> participants() const;
};

// Validates ids against the registry and opens a session at round 0. Only
// style_sources upload; the fused result reaches requesters ∪ sources.
FusionSession open_fusion_session(const std::vector<int>& requesters,
                                  const std::vector<int>& style_sources,
                                  Strategy strategy,
                                  const std::vector<int>& registered_ids,
                                  int max_rounds = 11);

enum class SessionStatus { kContinue, kConverged };

// Converged at t = T, or when every consecutive improvement across the last
// plateau_window history values is below plateau_threshold.
SessionStatus satisfaction_check(const FusionSession& session,
                                 const std::vector<double>& history);

// One federated round: sources run local_round and upload; the server fuses
// per strategy; the fused set reaches every participant (requester-only
// clients then fine-tune their generator against it); the link model prices
// the exchange; mean proxy-FID/perceptual scores across participants land in
// the record. Protocol errors abort the round and mark the record failed.
// jobs > 1 spreads client work over that many threads; results are
// bit-identical to the sequential order.
RoundRecord run_round(FusionSession& session,
                      const std::vector<ClientState*>& clients,
                      const PerceptualEncoder& enc, const LinkModel& link,
                      const TrainConfig& cfg, int jobs = 1);

// Rounds until satisfaction_check converges or a round fails.
std::vector<RoundRecord> run_session(FusionSession& session,
                                     const std::vector<ClientState*>& clients,
                                     const PerceptualEncoder& enc,
                                     const LinkModel& link,
                                     const TrainConfig& cfg, int jobs = 1);

}  // namespace fedgai
