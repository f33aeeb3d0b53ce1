#include "fedgai/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include <Eigen/Dense>

namespace fedgai {

namespace {

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_image_set(const std::vector<Tensor>& images, const char* who) {
  if (images.size() < 2)
    fail(std::string(who) + ": image set needs at least 2 images, got " +
         std::to_string(images.size()));
}

Tensor stack_images(const std::vector<Tensor>& images, size_t lo, size_t hi) {
  const Tensor& first = images[lo];
  if (first.rank() != 3)
    fail("features_of: images must be (C,H,W), got " +
         shape_str(first.shape()));
  const int c = first.dim(0), h = first.dim(1), w = first.dim(2);
  const int n = static_cast<int>(hi - lo);
  Tensor batch = Tensor::zeros({n, c, h, w});
  const size_t per = static_cast<size_t>(c) * h * w;
  for (size_t i = lo; i < hi; ++i) {
    if (images[i].shape() != first.shape())
      fail("features_of: mixed image shapes " + shape_str(first.shape()) +
           " vs " + shape_str(images[i].shape()));
    std::copy(images[i].values().begin(), images[i].values().end(),
              batch.values().begin() + static_cast<size_t>(i - lo) * per);
  }
  return batch;
}

// In-place channel-unit normalization of one (N,C,H,W) level's raw values.
void normalize_positions(std::vector<double>& v, int n, int c, int h, int w) {
  const size_t plane = static_cast<size_t>(h) * w;
  for (int s = 0; s < n; ++s)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const size_t base =
            static_cast<size_t>(s) * c * plane + static_cast<size_t>(y) * w + x;
        double norm2 = 0.0;
        for (int k = 0; k < c; ++k) {
          const double e = v[base + static_cast<size_t>(k) * plane];
          norm2 += e * e;
        }
        const double inv = 1.0 / std::max(std::sqrt(norm2), 1e-12);
        for (int k = 0; k < c; ++k) v[base + static_cast<size_t>(k) * plane] *= inv;
      }
}

}  // namespace

GaussianSummary summarize_features(const Tensor& features) {
  if (features.rank() != 2)
    fail("summarize_features: expected (N,d) features, got " +
         shape_str(features.shape()));
  const int n = features.dim(0), d = features.dim(1);
  if (n < 2)
    fail("summarize_features: needs at least 2 samples, got " +
         std::to_string(n));
  Eigen::Map<const MatrixRM> x(features.values().data(), n, d);
  GaussianSummary g;
  g.dim = d;
  Eigen::VectorXd mu = x.colwise().mean();
  MatrixRM centered = x.rowwise() - mu.transpose();
  MatrixRM cov = centered.transpose() * centered / static_cast<double>(n - 1);
  cov = 0.5 * (cov + MatrixRM(cov.transpose()));  // enforce exact symmetry
  g.mean.assign(mu.data(), mu.data() + d);
  g.cov.assign(cov.data(), cov.data() + static_cast<size_t>(d) * d);
  return g;
}

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.dim != b.dim)
    fail("frechet_distance: dimension mismatch " + std::to_string(a.dim) +
         " vs " + std::to_string(b.dim));
  const int d = a.dim;
  double mean_term = 0.0;
  for (int i = 0; i < d; ++i) {
    const double e = a.mean[static_cast<size_t>(i)] - b.mean[static_cast<size_t>(i)];
    mean_term += e * e;
  }
  Eigen::Map<const MatrixRM> sa(a.cov.data(), d, d);
  Eigen::Map<const MatrixRM> sb(b.cov.data(), d, d);
  const MatrixRM prod = sa * sb;
  const MatrixRM sym = 0.5 * (prod + MatrixRM(prod.transpose()));
  Eigen::SelfAdjointEigenSolver<MatrixRM> es(sym);
  if (es.info() != Eigen::Success)
    fail("frechet_distance: eigendecomposition failed");
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return mean_term + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
}

double fid_from_features(const Tensor& features_a, const Tensor& features_b) {
  return frechet_distance(summarize_features(features_a),
                          summarize_features(features_b));
}

Tensor features_of(const PerceptualEncoder& enc,
                   const std::vector<Tensor>& images, int batch) {
  if (images.empty()) fail("features_of: empty image set");
  if (batch < 1) fail("features_of: batch must be >= 1");
  NoGradGuard ng;
  const int n = static_cast<int>(images.size());
  Tensor out = Tensor::zeros({n, kEncoderChannels[3]});
  for (size_t lo = 0; lo < images.size(); lo += static_cast<size_t>(batch)) {
    const size_t hi = std::min(images.size(), lo + static_cast<size_t>(batch));
    const FeatureMaps f = enc.encode(stack_images(images, lo, hi));
    const Tensor pooled = enc.pooled_final(f);
    std::copy(pooled.values().begin(), pooled.values().end(),
              out.values().begin() + lo * kEncoderChannels[3]);
  }
  return out;
}

double proxy_fid(const PerceptualEncoder& enc, const std::vector<Tensor>& set_a,
                 const std::vector<Tensor>& set_b) {
  check_image_set(set_a, "proxy_fid");
  check_image_set(set_b, "proxy_fid");
  return fid_from_features(features_of(enc, set_a), features_of(enc, set_b));
}

double perceptual_distance(const PerceptualEncoder& enc, const Tensor& img_a,
                           const Tensor& img_b) {
  if (img_a.shape() != img_b.shape())
    fail("perceptual_distance: shape mismatch " + shape_str(img_a.shape()) +
         " vs " + shape_str(img_b.shape()));
  NoGradGuard ng;
  const FeatureMaps fa = enc.encode(stack_images({img_a}, 0, 1));
  const FeatureMaps fb = enc.encode(stack_images({img_b}, 0, 1));
  double total = 0.0;
  for (int j = 0; j < kFeatureLevels; ++j) {
    const Tensor& ta = fa.levels[static_cast<size_t>(j)];
    const Tensor& tb = fb.levels[static_cast<size_t>(j)];
    std::vector<double> va = ta.values(), vb = tb.values();
    normalize_positions(va, ta.dim(0), ta.dim(1), ta.dim(2), ta.dim(3));
    normalize_positions(vb, tb.dim(0), tb.dim(1), tb.dim(2), tb.dim(3));
    double s = 0.0;
    for (size_t i = 0; i < va.size(); ++i) {
      const double e = va[i] - vb[i];
      s += e * e;
    }
    total += s / static_cast<double>(va.size());
  }
  return total;
}

double mean_perceptual_distance(const PerceptualEncoder& enc,
                                const std::vector<Tensor>& set_a,
                                const std::vector<Tensor>& set_b) {
  if (set_a.empty() || set_a.size() != set_b.size())
    fail("mean_perceptual_distance: sets must be non-empty and equal-sized, "
         "got " + std::to_string(set_a.size()) + " and " +
         std::to_string(set_b.size()));
  double total = 0.0;
  for (size_t i = 0; i < set_a.size(); ++i)
    total += perceptual_distance(enc, set_a[i], set_b[i]);
  return total / static_cast<double>(set_a.size());
}

const char* const kReportHeader =
    "round,client_count,strategy,n_iter,bytes_up,bytes_down,upload_s,"
    "aggregate_s,download_s,mean_proxy_fid,mean_lpips_proxy,wall_time_total";

std::string format_g17(double v) {
  char buf[64];
  if (std::isnan(v) || std::isinf(v)) {
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
  }
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

void emit_report(const std::vector<RoundRecord>& records,
                 const std::string& csv_path) {
  std::ofstream f(csv_path, std::ios::binary);
  if (!f) fail("emit_report: cannot open " + csv_path);
  f << kReportHeader << "\n";
  for (const RoundRecord& r : records) {
    f << r.round << ',' << r.client_count << ',' << r.strategy << ','
      << r.n_iter << ',' << r.bytes_up << ',' << r.bytes_down << ','
      << format_g17(r.upload_s) << ',' << format_g17(r.aggregate_s) << ','
      << format_g17(r.download_s) << ',' << format_g17(r.mean_proxy_fid) << ','
      << format_g17(r.mean_lpips_proxy) << ','
      << format_g17(r.wall_time_total) << "\n";
  }
  if (!f) fail("emit_report: failed writing " + csv_path);
}

void emit_fid_chart(const std::vector<RoundRecord>& records,
                    const std::string& svg_path) {
  std::vector<std::string> strategies;
  for (const RoundRecord& r : records)
    if (std::find(strategies.begin(), strategies.end(), r.strategy) ==
        strategies.end())
      strategies.push_back(r.strategy);

  double min_fid = 0.0, max_fid = 1.0;
  int max_round = 1;
  if (!records.empty()) {
    min_fid = max_fid = records[0].mean_proxy_fid;
    for (const RoundRecord& r : records) {
      min_fid = std::min(min_fid, r.mean_proxy_fid);
      max_fid = std::max(max_fid, r.mean_proxy_fid);
      max_round = std::max(max_round, r.round);
    }
    if (max_fid == min_fid) max_fid = min_fid + 1.0;
  }
  const double x0 = 50, y0 = 20, plot_w = 520, plot_h = 340;
  auto sx = [&](int round) {
    return x0 + plot_w * static_cast<double>(round) / std::max(1, max_round);
  };
  auto sy = [&](double fid) {
    return y0 + plot_h * (1.0 - (fid - min_fid) / (max_fid - min_fid));
  };
  static const char* const kPalette[] = {"#d33", "#36c", "#393", "#a3a",
                                         "#b82", "#088"};

  std::ofstream f(svg_path, std::ios::binary);
  if (!f) fail("emit_fid_chart: cannot open " + svg_path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"620\" "
       "height=\"420\" viewBox=\"0 0 620 420\">\n"
       "<rect width=\"620\" height=\"420\" fill=\"white\"/>\n"
       "<line x1=\"50\" y1=\"360\" x2=\"570\" y2=\"360\" stroke=\"#444\"/>\n"
       "<line x1=\"50\" y1=\"20\" x2=\"50\" y2=\"360\" stroke=\"#444\"/>\n"
       "<text x=\"300\" y=\"400\" font-size=\"13\" "
       "text-anchor=\"middle\">round</text>\n"
       "<text x=\"14\" y=\"190\" font-size=\"13\" text-anchor=\"middle\" "
       "transform=\"rotate(-90 14 190)\">mean proxy FID</text>\n";
  for (size_t s = 0; s < strategies.size(); ++s) {
    f << "<polyline fill=\"none\" stroke=\"" << kPalette[s % 6]
      << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (const RoundRecord& r : records)
      if (r.strategy == strategies[s]) {
        if (!first) f << ' ';
        f << format_g17(sx(r.round)) << ',' << format_g17(sy(r.mean_proxy_fid));
        first = false;
      }
    f << "\"/>\n";
    f << "<text x=\"560\" y=\"" << 34 + 16 * s << "\" font-size=\"12\" "
      << "text-anchor=\"end\" fill=\"" << kPalette[s % 6] << "\">"
      << strategies[s] << "</text>\n";
  }
  f << "</svg>\n";
  if (!f) fail("emit_fid_chart: failed writing " + svg_path);
}

}  // namespace fedgai
