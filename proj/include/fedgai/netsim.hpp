#pragma once

#include <cstdint>
#include <vector>

#include "fedgai/params.hpp"

namespace fedgai {

// ---------------------------------------------------------------------------
// Deterministic cloud-edge link accounting: bytes on the wire and per-round
// latency. Pure functions of their inputs — no clocks, no randomness.
// ---------------------------------------------------------------------------

struct LinkModel {
  double bandwidth_bits_per_s = 1e6;
  int per_message_overhead_bytes = 64;
  double server_aggregate_seconds_per_mparam = 0.01;
  // Serialized transfers by default (one shared link); when set, concurrent
  // transfers overlap and the slowest one gates the phase.
  bool parallel_uplink = false;

  void validate() const;
};

// Modeled edge-device throughput used to convert counted multiply-accumulates
// into deterministic local-compute seconds.
inline constexpr double kReferenceMacsPerSecond = 1e9;

// Encoded checkpoint size plus the per-message framing overhead.
size_t message_bytes(const ParamSet& p, const LinkModel& link);

// Scalars the server reads when aggregating n_clients identical uploads.
int64_t aggregated_param_count(int64_t per_client_params, int n_clients);

struct LatencyBreakdown {
  double upload_s = 0.0;
  double aggregate_s = 0.0;
  double download_s = 0.0;
};

// Costs of one round: every upload crosses the uplink, the server touches
// every uploaded scalar, and the fused set goes out to n_recipients.
LatencyBreakdown round_latency(const LinkModel& link,
                               const std::vector<ParamSet>& uploads,
                               const ParamSet& fused, int n_recipients);

}  // namespace fedgai
