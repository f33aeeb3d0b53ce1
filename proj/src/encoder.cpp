#include "fedgai/encoder.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace fedgai {

namespace {

constexpr double kLeakySlope = 0.2;

// Orthonormal-row weight matrix reshaped to (c_out, c_in, k, k), scaled so the
// activation output keeps roughly unit variance under leaky_relu(0.2).
Tensor orthogonal_conv_weight(int c_out, int c_in, int k, Rng& rng) {
  const int rows = c_out, cols = c_in * k * k;
  Eigen::MatrixXd a(cols, rows);  // rows <= cols in every stage
  for (int j = 0; j < rows; ++j)
    for (int i = 0; i < cols; ++i) a(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(cols, rows);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(rows);
  for (int j = 0; j < rows; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);  // canonical sign
  const double gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
  Tensor w = Tensor::zeros({c_out, c_in, k, k});
  for (int o = 0; o < rows; ++o)
    for (int c = 0; c < cols; ++c)
      w.values()[static_cast<size_t>(o) * cols + c] = gain * q(c, o);
  return w;
}

Tensor replicate_gray(const Tensor& x) {
  return concat_channels({x, x, x});
}

}  // namespace

PerceptualEncoder::PerceptualEncoder(uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5eed));
  int c_in = 3;
  for (int s = 0; s < kFeatureLevels; ++s) {
    const int c_out = kEncoderChannels[static_cast<size_t>(s)];
    w1_.push_back(orthogonal_conv_weight(c_out, c_in, 3, rng));
    w2_.push_back(orthogonal_conv_weight(c_out, c_out, 3, rng));
    c_in = c_out;
  }
}

FeatureMaps PerceptualEncoder::encode(const Tensor& image) const {
  if (image.rank() != 4)
    fail("[encoder] expected (N,C,H,W) image, got " + shape_str(image.shape()));
  const int c = image.dim(1), h = image.dim(2), w = image.dim(3);
  if (c != 1 && c != 3)
    fail("[encoder] expected 1 or 3 channels, got " + std::to_string(c));
  if (h % 8 != 0 || w % 8 != 0)
    fail("[encoder] spatial size " + std::to_string(h) + "x" + std::to_string(w) +
         " must be divisible by 8");
  Tensor x = c == 1 ? replicate_gray(image) : image;
  FeatureMaps out;
  const Tensor no_bias;  // bias-free construction
  for (int s = 0; s < kFeatureLevels; ++s) {
    x = leaky_relu(conv2d(x, w1_[static_cast<size_t>(s)], no_bias, 1, 1), kLeakySlope);
    x = leaky_relu(conv2d(x, w2_[static_cast<size_t>(s)], no_bias, 1, 1), kLeakySlope);
    out.levels.push_back(x);  // tap before the pool
    if (s + 1 < kFeatureLevels) x = maxpool2x2(x);
  }
  return out;
}

Tensor PerceptualEncoder::pooled_final(const FeatureMaps& f) const {
  if (f.levels.size() != kFeatureLevels)
    fail("[encoder] expected 4 levels, got " + std::to_string(f.levels.size()));
  return global_avg_pool(f.levels.back());
}

ParamSet PerceptualEncoder::export_params() const {
  ParamSet p;
  for (int s = 0; s < kFeatureLevels; ++s) {
    const std::string base = "enc.stage" + std::to_string(s + 1);
    p.add({base + ".conv1.w", ParamRole::kEncoder, ParamKind::kConvW,
           w1_[static_cast<size_t>(s)].shape(), w1_[static_cast<size_t>(s)].values()});
    p.add({base + ".conv2.w", ParamRole::kEncoder, ParamKind::kConvW,
           w2_[static_cast<size_t>(s)].shape(), w2_[static_cast<size_t>(s)].values()});
  }
  return p;
}

StyleStats compute_style_stats(const PerceptualEncoder& enc,
                               const std::vector<Tensor>& sketches,
                               int batch_size) {
  if (sketches.empty()) fail("[style_stats] no sketches");
  NoGradGuard ng;
  std::vector<std::vector<double>> sum(kFeatureLevels), sum_sq(kFeatureLevels);
  std::vector<int64_t> count(kFeatureLevels, 0);
  for (size_t start = 0; start < sketches.size();
       start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(sketches.size(), start + static_cast<size_t>(batch_size));
    // Stack this batch along N. Entries are (C,H,W) or singleton (1,C,H,W).
    const auto& s0 = sketches[start].shape();
    if (!(sketches[start].rank() == 3 ||
          (sketches[start].rank() == 4 && s0[0] == 1)))
      fail("[style_stats] expected (C,H,W) or (1,C,H,W) sketches, got " +
           shape_str(s0));
    const size_t base = sketches[start].rank() == 4 ? 1 : 0;
    const int bc = s0[base], bh = s0[base + 1], bw = s0[base + 2];
    Tensor batch = Tensor::zeros({static_cast<int>(end - start), bc, bh, bw});
    const size_t per = static_cast<size_t>(bc) * bh * bw;
    for (size_t i = start; i < end; ++i) {
      if (sketches[i].shape() != s0)
        fail("[style_stats] mixed sketch shapes " + shape_str(sketches[i].shape()) +
             " vs " + shape_str(s0));
      std::copy(sketches[i].values().begin(), sketches[i].values().end(),
                batch.values().begin() + static_cast<int64_t>((i - start) * per));
    }
    FeatureMaps f = enc.encode(batch);
    for (int lv = 0; lv < kFeatureLevels; ++lv) {
      const Tensor& t = f.levels[static_cast<size_t>(lv)];
      const int n = t.dim(0), c = t.dim(1);
      const size_t hw = static_cast<size_t>(t.dim(2)) * t.dim(3);
      auto& s = sum[static_cast<size_t>(lv)];
      auto& s2 = sum_sq[static_cast<size_t>(lv)];
      if (s.empty()) {
        s.assign(static_cast<size_t>(c), 0.0);
        s2.assign(static_cast<size_t>(c), 0.0);
      }
      for (int si = 0; si < n; ++si)
        for (int ci = 0; ci < c; ++ci) {
          const double* p =
              t.values().data() + (static_cast<size_t>(si) * c + ci) * hw;
          for (size_t k = 0; k < hw; ++k) {
            s[static_cast<size_t>(ci)] += p[k];
            s2[static_cast<size_t>(ci)] += p[k] * p[k];
          }
        }
      count[static_cast<size_t>(lv)] += static_cast<int64_t>(n) * hw;
    }
  }
  StyleStats stats;
  for (int lv = 0; lv < kFeatureLevels; ++lv) {
    const auto& s = sum[static_cast<size_t>(lv)];
    const auto& s2 = sum_sq[static_cast<size_t>(lv)];
    const double m = static_cast<double>(count[static_cast<size_t>(lv)]);
    Tensor mu = Tensor::zeros({static_cast<int>(s.size())});
    Tensor sd = Tensor::zeros({static_cast<int>(s.size())});
    for (size_t ci = 0; ci < s.size(); ++ci) {
      const double mean = s[ci] / m;
      const double var = std::max(0.0, s2[ci] / m - mean * mean);
      mu.values()[ci] = mean;
      sd.values()[ci] = std::max(std::sqrt(var), kStyleEps);
    }
    stats.mean.push_back(mu);
    stats.std.push_back(sd);
  }
  return stats;
}

FeatureMaps adain_sd(const FeatureMaps& content, const StyleStats& stats) {
  if (content.levels.size() != kFeatureLevels ||
      stats.mean.size() != kFeatureLevels)
    fail("[adain] expected 4 levels");
  FeatureMaps out;
  for (int lv = 0; lv < kFeatureLevels; ++lv) {
    const Tensor& x = content.levels[static_cast<size_t>(lv)];
    const Tensor& mu_s = stats.mean[static_cast<size_t>(lv)];
    const Tensor& sd_s = stats.std[static_cast<size_t>(lv)];
    if (x.dim(1) != mu_s.dim(0))
      fail("[adain] level " + std::to_string(lv + 1) + " channels " +
           std::to_string(x.dim(1)) + " vs stats " + std::to_string(mu_s.dim(0)));
    auto [mu_b, sd_b] = channel_mean_std(x);
    // out = scale * x + (mu_s - scale * mu_b), scale = sd_s / (sd_b + eps)
    Tensor scale = div(sd_s, add_scalar(sd_b, kStyleEps));
    Tensor shift = sub(mu_s, mul(mu_b, scale));
    out.levels.push_back(channel_affine(x, scale, shift));
  }
  return out;
}

}  // namespace fedgai
