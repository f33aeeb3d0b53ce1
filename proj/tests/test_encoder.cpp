#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fedgai/encoder.hpp"
#include "test_support.hpp"

using namespace fedgai;
using fedgai::test::fd_check;
using fedgai::test::random_tensor;

namespace {

// Per-channel population mean/std over (N, H, W), straight loops.
void direct_channel_stats(const Tensor& t, std::vector<double>& mu,
                          std::vector<double>& sd) {
  const int n = t.dim(0), c = t.dim(1);
  const size_t hw = static_cast<size_t>(t.dim(2)) * t.dim(3);
  const double m = static_cast<double>(n) * static_cast<double>(hw);
  mu.assign(static_cast<size_t>(c), 0.0);
  sd.assign(static_cast<size_t>(c), 0.0);
  for (int ci = 0; ci < c; ++ci) {
    double s = 0.0, s2 = 0.0;
    for (int si = 0; si < n; ++si) {
      const double* p = t.values().data() + (static_cast<size_t>(si) * c + ci) * hw;
      for (size_t k = 0; k < hw; ++k) {
        s += p[k];
        s2 += p[k] * p[k];
      }
    }
    mu[static_cast<size_t>(ci)] = s / m;
    sd[static_cast<size_t>(ci)] = std::sqrt(std::max(0.0, s2 / m - (s / m) * (s / m)));
  }
}

FeatureMaps synthetic_levels(Rng& rng, int n, int h) {
  FeatureMaps f;
  for (int j = 0; j < kFeatureLevels; ++j)
    f.levels.push_back(random_tensor(
        {n, kEncoderChannels[static_cast<size_t>(j)], h >> j, h >> j}, rng, 1.0,
        false));
  return f;
}

StyleStats constant_stats(double mu, double sd) {
  StyleStats s;
  for (int j = 0; j < kFeatureLevels; ++j) {
    s.mean.push_back(Tensor::full({kEncoderChannels[static_cast<size_t>(j)]}, mu));
    s.std.push_back(Tensor::full({kEncoderChannels[static_cast<size_t>(j)]}, sd));
  }
  return s;
}

}  // namespace

TEST_CASE("encode yields 4 levels with halving spatial sizes") {
  PerceptualEncoder enc(42);
  Rng rng(1);
  Tensor img = random_tensor({2, 1, 32, 32}, rng, 0.5, false);
  FeatureMaps f = enc.encode(img);
  REQUIRE(f.levels.size() == 4);
  CHECK(f.levels[0].shape() == std::vector<int>{2, 8, 32, 32});
  CHECK(f.levels[1].shape() == std::vector<int>{2, 16, 16, 16});
  CHECK(f.levels[2].shape() == std::vector<int>{2, 32, 8, 8});
  CHECK(f.levels[3].shape() == std::vector<int>{2, 64, 4, 4});
  Tensor pooled = enc.pooled_final(f);
  CHECK(pooled.shape() == std::vector<int>{2, 64});
}

TEST_CASE("zero image gives zero features (bias-free construction)") {
  PerceptualEncoder enc(7);
  Tensor img = Tensor::zeros({1, 1, 16, 16});
  FeatureMaps f = enc.encode(img);
  for (const auto& lv : f.levels)
    for (double v : lv.values()) CHECK(v == 0.0);
}

TEST_CASE("same seed gives bit-identical weights and features") {
  PerceptualEncoder a(123), b(123), c(124);
  CHECK(a.export_params().encode() == b.export_params().encode());
  CHECK(a.export_params().encode() != c.export_params().encode());
  Rng rng(2);
  Tensor img = random_tensor({1, 3, 16, 16}, rng, 0.5, false);
  CHECK(a.encode(img).levels[3].values() == b.encode(img).levels[3].values());
}

TEST_CASE("grayscale input equals explicit 3-channel replication") {
  PerceptualEncoder enc(5);
  Rng rng(3);
  Tensor gray = random_tensor({1, 1, 16, 16}, rng, 0.5, false);
  Tensor rgb = concat_channels({gray, gray, gray});
  CHECK(enc.encode(gray).levels[2].values() == enc.encode(rgb).levels[2].values());
}

TEST_CASE("indivisible spatial size is rejected") {
  PerceptualEncoder enc(5);
  CHECK_THROWS_AS((void)enc.encode(Tensor::zeros({1, 1, 20, 20})), Error);
  CHECK_THROWS_AS((void)enc.encode(Tensor::zeros({1, 2, 16, 16})), Error);
}

TEST_CASE("encoder weights carry no gradients but the input does") {
  PerceptualEncoder enc(9);
  Rng rng(4);
  Tensor img = random_tensor({1, 1, 16, 16}, rng, 0.5, true);
  {
    Tape tape;
    FeatureMaps f = enc.encode(img);
    Tensor loss = frobenius_norm_sq(f.levels[3]);
    tape.backward(loss);
  }
  CHECK(img.has_grad());
  double gsum = 0.0;
  for (double g : img.grad()) gsum += std::abs(g);
  CHECK(gsum > 0.0);
  // Weight export before/after training-style use is unchanged.
  CHECK(enc.export_params().encode() == PerceptualEncoder(9).export_params().encode());
}

TEST_CASE("style stats match a whole-set direct computation") {
  PerceptualEncoder enc(11);
  Rng rng(5);
  std::vector<Tensor> sketches;
  for (int i = 0; i < 7; ++i)
    sketches.push_back(random_tensor({1, 1, 16, 16}, rng, 0.7, false));
  StyleStats stats = compute_style_stats(enc, sketches, 3);

  // Oracle: encode everything as one batch and take per-channel stats.
  Tensor all = Tensor::zeros({7, 1, 16, 16});
  for (int i = 0; i < 7; ++i)
    std::copy(sketches[static_cast<size_t>(i)].values().begin(),
              sketches[static_cast<size_t>(i)].values().end(),
              all.values().begin() + static_cast<int64_t>(i) * 16 * 16);
  FeatureMaps f = enc.encode(all);
  for (int j = 0; j < kFeatureLevels; ++j) {
    std::vector<double> mu, sd;
    direct_channel_stats(f.levels[static_cast<size_t>(j)], mu, sd);
    for (size_t ci = 0; ci < mu.size(); ++ci) {
      CHECK(stats.mean[static_cast<size_t>(j)].values()[ci] ==
            doctest::Approx(mu[ci]).epsilon(1e-9));
      CHECK(stats.std[static_cast<size_t>(j)].values()[ci] ==
            doctest::Approx(sd[ci]).epsilon(1e-9));
    }
  }
}

TEST_CASE("style stats are batch-size independent and permutation invariant") {
  PerceptualEncoder enc(13);
  Rng rng(6);
  std::vector<Tensor> sketches;
  for (int i = 0; i < 6; ++i)
    sketches.push_back(random_tensor({1, 1, 16, 16}, rng, 0.7, false));
  StyleStats a = compute_style_stats(enc, sketches, 1);
  StyleStats b = compute_style_stats(enc, sketches, 4);
  for (int j = 0; j < kFeatureLevels; ++j) {
    for (size_t ci = 0; ci < a.mean[static_cast<size_t>(j)].values().size(); ++ci) {
      CHECK(a.mean[static_cast<size_t>(j)].values()[ci] ==
            doctest::Approx(b.mean[static_cast<size_t>(j)].values()[ci]).epsilon(1e-12));
      CHECK(a.std[static_cast<size_t>(j)].values()[ci] ==
            doctest::Approx(b.std[static_cast<size_t>(j)].values()[ci]).epsilon(1e-12));
    }
  }
  std::vector<Tensor> shuffled = {sketches[3], sketches[0], sketches[5],
                                  sketches[1], sketches[4], sketches[2]};
  StyleStats c = compute_style_stats(enc, shuffled, 4);
  for (int j = 0; j < kFeatureLevels; ++j)
    for (size_t ci = 0; ci < a.mean[static_cast<size_t>(j)].values().size(); ++ci)
      CHECK(a.mean[static_cast<size_t>(j)].values()[ci] ==
            doctest::Approx(c.mean[static_cast<size_t>(j)].values()[ci]).epsilon(1e-9));
}

TEST_CASE("style stats floor the standard deviation") {
  PerceptualEncoder enc(15);
  // Identical sketches: zero variance everywhere -> floored, never zero.
  std::vector<Tensor> sketches(3, Tensor::full({1, 1, 16, 16}, 0.25));
  StyleStats stats = compute_style_stats(enc, sketches);
  for (int j = 0; j < kFeatureLevels; ++j)
    for (double sd : stats.std[static_cast<size_t>(j)].values())
      CHECK(sd >= kStyleEps);
  CHECK_THROWS_AS((void)compute_style_stats(enc, {}), Error);
}

TEST_CASE("adain moves batch statistics onto the target stats") {
  Rng rng(7);
  FeatureMaps content = synthetic_levels(rng, 3, 16);
  // Standardize each channel first so the target is exact.
  for (auto& lv : content.levels) {
    std::vector<double> mu, sd;
    direct_channel_stats(lv, mu, sd);
    const int c = lv.dim(1);
    const size_t hw = static_cast<size_t>(lv.dim(2)) * lv.dim(3);
    for (int si = 0; si < lv.dim(0); ++si)
      for (int ci = 0; ci < c; ++ci) {
        double* p = lv.values().data() + (static_cast<size_t>(si) * c + ci) * hw;
        for (size_t k = 0; k < hw; ++k)
          p[k] = (p[k] - mu[static_cast<size_t>(ci)]) / sd[static_cast<size_t>(ci)];
      }
  }
  FeatureMaps mixed = adain_sd(content, constant_stats(2.0, 3.0));
  for (const auto& lv : mixed.levels) {
    std::vector<double> mu, sd;
    direct_channel_stats(lv, mu, sd);
    for (double m : mu) CHECK(m == doctest::Approx(2.0).epsilon(1e-6));
    for (double s : sd) CHECK(s == doctest::Approx(3.0).epsilon(1e-6));
  }
}

TEST_CASE("adain with the content's own stats is the identity") {
  Rng rng(8);
  FeatureMaps content = synthetic_levels(rng, 2, 16);
  StyleStats own;
  for (const auto& lv : content.levels) {
    std::vector<double> mu, sd;
    direct_channel_stats(lv, mu, sd);
    own.mean.push_back(Tensor::from({lv.dim(1)}, std::vector<double>(mu)));
    own.std.push_back(Tensor::from({lv.dim(1)}, std::vector<double>(sd)));
  }
  FeatureMaps mixed = adain_sd(content, own);
  for (int j = 0; j < kFeatureLevels; ++j) {
    const auto& a = content.levels[static_cast<size_t>(j)].values();
    const auto& b = mixed.levels[static_cast<size_t>(j)].values();
    for (size_t i = 0; i < a.size(); ++i)
      CHECK(std::abs(a[i] - b[i]) <= 1e-6 * (1.0 + std::abs(a[i])));
  }
}

TEST_CASE("adain applied twice is a fixed point") {
  Rng rng(9);
  FeatureMaps content = synthetic_levels(rng, 2, 16);
  StyleStats stats = constant_stats(0.7, 1.9);
  FeatureMaps once = adain_sd(content, stats);
  FeatureMaps twice = adain_sd(once, stats);
  for (int j = 0; j < kFeatureLevels; ++j) {
    const auto& a = once.levels[static_cast<size_t>(j)].values();
    const auto& b = twice.levels[static_cast<size_t>(j)].values();
    for (size_t i = 0; i < a.size(); ++i)
      CHECK(std::abs(a[i] - b[i]) <= 1e-6 * (1.0 + std::abs(a[i])));
  }
}

TEST_CASE("adain matches the direct formula") {
  Rng rng(10);
  FeatureMaps content = synthetic_levels(rng, 2, 16);
  StyleStats stats;
  for (int j = 0; j < kFeatureLevels; ++j) {
    const int c = kEncoderChannels[static_cast<size_t>(j)];
    stats.mean.push_back(random_tensor({c}, rng, 1.0, false));
    Tensor sd = random_tensor({c}, rng, 0.5, false);
    for (double& v : sd.values()) v = 0.5 + std::abs(v);
    stats.std.push_back(sd);
  }
  FeatureMaps mixed = adain_sd(content, stats);
  for (int j = 0; j < kFeatureLevels; ++j) {
    const Tensor& x = content.levels[static_cast<size_t>(j)];
    std::vector<double> mu, sd;
    direct_channel_stats(x, mu, sd);
    const int c = x.dim(1);
    const size_t hw = static_cast<size_t>(x.dim(2)) * x.dim(3);
    for (int si = 0; si < x.dim(0); ++si)
      for (int ci = 0; ci < c; ++ci) {
        const double ms = stats.mean[static_cast<size_t>(j)].values()[static_cast<size_t>(ci)];
        const double ss = stats.std[static_cast<size_t>(j)].values()[static_cast<size_t>(ci)];
        for (size_t k = 0; k < hw; ++k) {
          const size_t idx = (static_cast<size_t>(si) * c + ci) * hw + k;
          const double expect =
              ss * (x.values()[idx] - mu[static_cast<size_t>(ci)]) /
                  (sd[static_cast<size_t>(ci)] + kStyleEps) +
              ms;
          CHECK(mixed.levels[static_cast<size_t>(j)].values()[idx] ==
                doctest::Approx(expect).epsilon(1e-12));
        }
      }
  }
}

TEST_CASE("adain rejects channel mismatches") {
  Rng rng(11);
  FeatureMaps content = synthetic_levels(rng, 1, 16);
  StyleStats bad = constant_stats(0.0, 1.0);
  bad.mean[2] = Tensor::full({5}, 0.0);
  bad.std[2] = Tensor::full({5}, 1.0);
  CHECK_THROWS_AS((void)adain_sd(content, bad), Error);
}

TEST_CASE("grad: adain is differentiable in the content") {
  Rng rng(12);
  Tensor lv0 = random_tensor({2, 8, 4, 4}, rng, 1.0);
  StyleStats stats = constant_stats(0.5, 2.0);
  // Single-level FD through the adain arithmetic (other levels constant).
  auto rep = fd_check(
      [&stats](std::vector<Tensor>& in) {
        FeatureMaps f;
        f.levels.push_back(in[0]);
        f.levels.push_back(Tensor::zeros({2, 16, 2, 2}));
        f.levels.push_back(Tensor::zeros({2, 32, 2, 2}));
        f.levels.push_back(Tensor::zeros({2, 64, 2, 2}));
        FeatureMaps m = adain_sd(f, stats);
        return frobenius_norm_sq(m.levels[0]);
      },
      {lv0});
  INFO(rep.where);
  CHECK(rep.ok);
}
