#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedgai/encoder.hpp"
#include "fedgai/params.hpp"
#include "fedgai/tensor.hpp"

namespace fedgai {

// Gaussian fit of pooled encoder features over an image set. cov is row-major
// d x d, symmetrized, with N-1 normalization.
struct GaussianSummary {
  int dim = 0;
  std::vector<double> mean;
  std::vector<double> cov;
};

// features: (N, d) with N >= 2.
GaussianSummary summarize_features(const Tensor& features);

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 sqrt(sym(S_a S_b))), where the matrix
// square root comes from the symmetric eigendecomposition of the symmetrized
// covariance product with negative eigenvalues clamped to zero.
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);

// Convenience entry for feeding raw feature batches (test mode and callers
// that already hold features).
double fid_from_features(const Tensor& features_a, const Tensor& features_b);

// Pooled level-4 features, (N, 64), for a set of same-shape (C,H,W) images
// with C in {1, 3}. Encoding runs in fixed-size batches; results do not
// depend on the batch size.
Tensor features_of(const PerceptualEncoder& enc,
                   const std::vector<Tensor>& images, int batch = 32);

// Frechet distance between the pooled-feature Gaussians of two image sets
// (each of size >= 2).
double proxy_fid(const PerceptualEncoder& enc, const std::vector<Tensor>& set_a,
                 const std::vector<Tensor>& set_b);

// Perceptual dissimilarity: sum over the 4 encoder levels of the mean squared
// difference between channel-unit-normalized features (each spatial
// position's channel vector scaled to unit norm, zero vectors left at zero).
double perceptual_distance(const PerceptualEncoder& enc, const Tensor& img_a,
                           const Tensor& img_b);

// Mean perceptual_distance over index-paired image sets of equal size.
double mean_perceptual_distance(const PerceptualEncoder& enc,
                                const std::vector<Tensor>& set_a,
                                const std::vector<Tensor>& set_b);

inline uint64_t count_params(const ParamSet& p) { return p.scalar_count(); }
inline uint64_t flops_from_macs(uint64_t macs) { return 2 * macs; }

// One federated round as reported in the experiment CSVs.
struct RoundRecord {
  int round = 0;
  int client_count = 0;
  std::string strategy;
  int n_iter = 0;
  uint64_t bytes_up = 0;
  uint64_t bytes_down = 0;
  double upload_s = 0.0;
  double aggregate_s = 0.0;
  double download_s = 0.0;
  double mean_proxy_fid = 0.0;
  double mean_lpips_proxy = 0.0;
  double wall_time_total = 0.0;
  // Bookkeeping outside the CSV schema: modeled on-device compute seconds
  // (MAC count over a reference rate, so reports stay deterministic), and the
  // abort marker for rounds cut short by protocol errors.
  double local_train_s = 0.0;
  bool failed = false;
  std::string note;
};

extern const char* const kReportHeader;

// Shortest round-trip-exact decimal rendering (printf %.17g trimmed), used
// everywhere floats reach disk so re-emission is byte-identical.
std::string format_g17(double v);

// Writes records as CSV under kReportHeader, one row per record, in order.
void emit_report(const std::vector<RoundRecord>& records,
                 const std::string& csv_path);

// Line chart of mean_proxy_fid vs round, one polyline per strategy in order
// of first appearance. Deterministic output; layout is not under contract.
void emit_fid_chart(const std::vector<RoundRecord>& records,
                    const std::string& svg_path);

}  // namespace fedgai
