#include "fedgai/netsim.hpp"

#include <algorithm>

namespace fedgai {

void LinkModel::validate() const {
  if (!(bandwidth_bits_per_s > 0.0))
    fail("link model: bandwidth must be positive");
  if (per_message_overhead_bytes < 0)
    fail("link model: per-message overhead must be >= 0");
  if (server_aggregate_seconds_per_mparam < 0.0)
    fail("link model: aggregate cost must be >= 0");
}

size_t message_bytes(const ParamSet& p, const LinkModel& link) {
  link.validate();
  return wire_bytes(p) + static_cast<size_t>(link.per_message_overhead_bytes);
}

int64_t aggregated_param_count(int64_t per_client_params, int n_clients) {
  if (per_client_params < 0 || n_clients < 0)
    fail("aggregated_param_count: negative input");
  return per_client_params * n_clients;
}

LatencyBreakdown round_latency(const LinkModel& link,
                               const std::vector<ParamSet>& uploads,
                               const ParamSet& fused, int n_recipients) {
  link.validate();
  if (n_recipients < 0) fail("round_latency: negative recipient count");
  LatencyBreakdown out;
  double serial_bits = 0.0, slowest_bits = 0.0;
  int64_t aggregated = 0;
  for (const auto& u : uploads) {
    double bits = 8.0 * static_cast<double>(message_bytes(u, link));
    serial_bits += bits;
    slowest_bits = std::max(slowest_bits, bits);
    aggregated += u.scalar_count();
  }
  out.upload_s =
      (link.parallel_uplink ? slowest_bits : serial_bits) /
      link.bandwidth_bits_per_s;
  out.aggregate_s = link.server_aggregate_seconds_per_mparam *
                    (static_cast<double>(aggregated) / 1e6);
  if (n_recipients > 0) {
    double bits = 8.0 * static_cast<double>(message_bytes(fused, link));
    out.download_s =
        (link.parallel_uplink ? bits : bits * n_recipients) /
        link.bandwidth_bits_per_s;
  }
  return out;
}

}  // namespace fedgai
