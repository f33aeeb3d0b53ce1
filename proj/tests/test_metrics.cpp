#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

#include "fedgai/metrics.hpp"
#include "fedgai/synthdata.hpp"
#include "test_support.hpp"

using namespace fedgai;
using fedgai::test::random_tensor;

namespace {

Tensor batch1(const Tensor& img) {
  std::vector<int> shape = {1};
  for (int d : img.shape()) shape.push_back(d);
  return Tensor::from(shape, img.values());
}

std::vector<Tensor> sketch_set(const StyleProfile& p, int n, int res) {
  std::vector<Tensor> out;
  for (const StylePair& pair : generate_dataset(p, n, res))
    out.push_back(pair.sketch);
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("fid of a set against itself is zero") {
  Rng rng(3);
  Tensor f = random_tensor({10, 5}, rng, 1.0, false);
  CHECK(std::abs(fid_from_features(f, f)) <= 1e-6);
}

TEST_CASE("identity covariances reduce fid to the mean shift") {
  // Rows +-sqrt(7/2) e_i give exact zero mean and exact identity sample
  // covariance under N-1 normalization (N=8, d=4).
  const int d = 4, n = 2 * d;
  const double s = std::sqrt((n - 1) / 2.0);
  Tensor fa = Tensor::zeros({n, d});
  for (int i = 0; i < d; ++i) {
    fa.values()[static_cast<size_t>(2 * i) * d + i] = s;
    fa.values()[static_cast<size_t>(2 * i + 1) * d + i] = -s;
  }
  const double delta[4] = {0.3, -0.2, 0.5, 0.1};
  Tensor fb = Tensor::from(fa.shape(), fa.values());
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < d; ++j)
      fb.values()[static_cast<size_t>(r) * d + j] += delta[j];
  double expect = 0.0;
  for (double v : delta) expect += v * v;
  CHECK(fid_from_features(fa, fb) == doctest::Approx(expect).epsilon(1e-9));
  CHECK(std::abs(fid_from_features(fa, fb) - expect) < 1e-6);
}

TEST_CASE("three hand-built vectors match an independent closed-form oracle") {
  // d=2 lets the oracle use the exact 2x2 symmetric eigendecomposition,
  // entirely test-local: no shared code with the implementation.
  const std::vector<double> raw_a = {1, 2, 2, 4, 3, 3};
  const std::vector<double> raw_b = {0, 0, 1, 1, 2, 5};
  Tensor fa = Tensor::from({3, 2}, raw_a);
  Tensor fb = Tensor::from({3, 2}, raw_b);

  auto stats = [](const std::vector<double>& raw, double mu[2], double cov[4]) {
    mu[0] = (raw[0] + raw[2] + raw[4]) / 3.0;
    mu[1] = (raw[1] + raw[3] + raw[5]) / 3.0;
    cov[0] = cov[1] = cov[2] = cov[3] = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double cx = raw[static_cast<size_t>(2 * i)] - mu[0];
      const double cy = raw[static_cast<size_t>(2 * i) + 1] - mu[1];
      cov[0] += cx * cx;
      cov[1] += cx * cy;
      cov[2] += cy * cx;
      cov[3] += cy * cy;
    }
    for (int k = 0; k < 4; ++k) cov[k] /= 2.0;  // N-1 = 2
  };
  double mu_a[2], cov_a[4], mu_b[2], cov_b[4];
  stats(raw_a, mu_a, cov_a);
  stats(raw_b, mu_b, cov_b);

  // P = cov_a * cov_b, symmetrized; eigenvalues by the quadratic formula.
  double p[4];
  p[0] = cov_a[0] * cov_b[0] + cov_a[1] * cov_b[2];
  p[1] = cov_a[0] * cov_b[1] + cov_a[1] * cov_b[3];
  p[2] = cov_a[2] * cov_b[0] + cov_a[3] * cov_b[2];
  p[3] = cov_a[2] * cov_b[1] + cov_a[3] * cov_b[3];
  const double sp = p[0], sq = 0.5 * (p[1] + p[2]), sr = p[3];
  const double mid = 0.5 * (sp + sr);
  const double rad = std::sqrt(0.25 * (sp - sr) * (sp - sr) + sq * sq);
  const double l1 = std::max(mid + rad, 0.0), l2 = std::max(mid - rad, 0.0);
  const double mean_term = (mu_a[0] - mu_b[0]) * (mu_a[0] - mu_b[0]) +
                           (mu_a[1] - mu_b[1]) * (mu_a[1] - mu_b[1]);
  const double expect = mean_term + cov_a[0] + cov_a[3] + cov_b[0] + cov_b[3] -
                        2.0 * (std::sqrt(l1) + std::sqrt(l2));

  CHECK(fid_from_features(fa, fb) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("fid symmetry and nonnegativity over random sets") {
  Rng rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = 4 + static_cast<int>(rng.uniform_index(16));
    const int m = 4 + static_cast<int>(rng.uniform_index(16));
    const int d = 2 + static_cast<int>(rng.uniform_index(7));
    Tensor fa = random_tensor({n, d}, rng, 1.0 + trial * 0.1, false);
    Tensor fb = random_tensor({m, d}, rng, 0.5, false);
    // correlate some columns to stress non-diagonal covariances
    for (int r = 0; r < m; ++r)
      fb.values()[static_cast<size_t>(r) * d + (d - 1)] +=
          0.8 * fb.values()[static_cast<size_t>(r) * d];
    const double ab = fid_from_features(fa, fb);
    const double ba = fid_from_features(fb, fa);
    CAPTURE(trial);
    CHECK(std::abs(ab - ba) < 1e-6);
    CHECK(ab >= -1e-9);
  }
}

TEST_CASE("fid input validation") {
  Rng rng(13);
  Tensor one = random_tensor({1, 4}, rng, 1.0, false);
  Tensor ok = random_tensor({4, 4}, rng, 1.0, false);
  CHECK_THROWS_AS((void)fid_from_features(one, ok), Error);
  CHECK_THROWS_AS((void)fid_from_features(ok, one), Error);
  CHECK_THROWS_AS((void)summarize_features(random_tensor({2, 2, 2}, rng, 1.0, false)),
                  Error);
  GaussianSummary a = summarize_features(ok);
  GaussianSummary b = summarize_features(random_tensor({4, 5}, rng, 1.0, false));
  CHECK_THROWS_AS((void)frechet_distance(a, b), Error);
}

TEST_CASE("gaussian summary is symmetric with near-psd spectrum") {
  Rng rng(17);
  Tensor f = random_tensor({12, 6}, rng, 1.0, false);
  GaussianSummary g = summarize_features(f);
  REQUIRE(g.dim == 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      CHECK(g.cov[static_cast<size_t>(i) * 6 + j] ==
            g.cov[static_cast<size_t>(j) * 6 + i]);
  // Diagonal of a covariance is a variance: nonnegative.
  for (int i = 0; i < 6; ++i) CHECK(g.cov[static_cast<size_t>(i) * 6 + i] >= 0.0);
}

TEST_CASE("proxy fid over encoded sketch sets") {
  PerceptualEncoder enc(0x5eed);
  StyleProfile p;
  p.stroke_width_px = 2;
  p.seed = 100;
  auto set = sketch_set(p, 8, 32);
  CHECK(std::abs(proxy_fid(enc, set, set)) <= 1e-6);

  std::vector<Tensor> tiny = {set[0]};
  CHECK_THROWS_AS((void)proxy_fid(enc, tiny, set), Error);

  SUBCASE("feature extraction does not depend on the batch size") {
    Tensor f3 = features_of(enc, set, 3);
    Tensor f32 = features_of(enc, set, 32);
    REQUIRE(f3.shape() == f32.shape());
    for (size_t i = 0; i < f3.values().size(); ++i)
      CHECK(f3.values()[i] == doctest::Approx(f32.values()[i]).epsilon(1e-12));
  }
  SUBCASE("mixed shapes are rejected") {
    auto mixed = set;
    mixed.push_back(generate_dataset(p, 1, 16)[0].sketch);
    CHECK_THROWS_AS((void)features_of(enc, mixed), Error);
  }
}

TEST_CASE("distinct stroke styles are farther apart than seed noise") {
  PerceptualEncoder enc(0x5eed);
  StyleProfile thin;
  thin.stroke_width_px = 1;
  thin.seed = 500;
  StyleProfile thin2 = thin;
  thin2.seed = 501;
  StyleProfile bold = thin;
  bold.stroke_width_px = 4;

  const int n = 100, res = 32;
  auto a = sketch_set(thin, n, res);
  auto a2 = sketch_set(thin2, n, res);
  auto b = sketch_set(bold, n, res);
  const double same_style = proxy_fid(enc, a, a2);
  const double cross_style = proxy_fid(enc, a, b);
  CAPTURE(same_style);
  CAPTURE(cross_style);
  CHECK(cross_style > same_style);
}

TEST_CASE("perceptual distance: identity, symmetry, and loop oracle") {
  PerceptualEncoder enc(0x5eed);
  StyleProfile p;
  p.stroke_width_px = 2;
  p.jitter_amplitude_px = 1.0;
  p.seed = 300;
  auto pairs = generate_dataset(p, 2, 32);
  const Tensor& a = pairs[0].sketch;
  const Tensor& b = pairs[1].sketch;

  CHECK(perceptual_distance(enc, a, a) == 0.0);
  CHECK(perceptual_distance(enc, a, b) == perceptual_distance(enc, b, a));
  CHECK(perceptual_distance(enc, a, b) > 0.0);
  CHECK_THROWS_AS(
      (void)perceptual_distance(enc, a, generate_dataset(p, 1, 16)[0].sketch),
      Error);

  // Loop oracle: re-encode and normalize every spatial channel vector by hand.
  NoGradGuard ng;
  const FeatureMaps fa = enc.encode(batch1(a));
  const FeatureMaps fb = enc.encode(batch1(b));
  double expect = 0.0;
  for (int j = 0; j < kFeatureLevels; ++j) {
    const Tensor& ta = fa.levels[static_cast<size_t>(j)];
    const Tensor& tb = fb.levels[static_cast<size_t>(j)];
    const int c = ta.dim(1), h = ta.dim(2), w = ta.dim(3);
    double level_sum = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double na = 0, nb = 0;
        for (int k = 0; k < c; ++k) {
          const double ea = ta.values()[(static_cast<size_t>(k) * h + y) * w + x];
          const double eb = tb.values()[(static_cast<size_t>(k) * h + y) * w + x];
          na += ea * ea;
          nb += eb * eb;
        }
        na = std::max(std::sqrt(na), 1e-12);
        nb = std::max(std::sqrt(nb), 1e-12);
        for (int k = 0; k < c; ++k) {
          const double ea =
              ta.values()[(static_cast<size_t>(k) * h + y) * w + x] / na;
          const double eb =
              tb.values()[(static_cast<size_t>(k) * h + y) * w + x] / nb;
          level_sum += (ea - eb) * (ea - eb);
        }
      }
    expect += level_sum / (static_cast<double>(c) * h * w);
  }
  CHECK(perceptual_distance(enc, a, b) ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("perceptual distance behaves as a pseudometric on a mixed corpus") {
  PerceptualEncoder enc(0x5eed);
  std::vector<Tensor> corpus;
  for (const double width : {1.0, 2.0, 4.0}) {
    StyleProfile p;
    p.stroke_width_px = width;
    p.jitter_amplitude_px = width == 2.0 ? 1.5 : 0.0;
    p.seed = 700 + static_cast<uint64_t>(width);
    for (const StylePair& pr : generate_dataset(p, 4, 32))
      corpus.push_back(pr.sketch);
  }
  const int n = static_cast<int>(corpus.size());
  std::vector<double> dist(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double d = perceptual_distance(enc, corpus[static_cast<size_t>(i)],
                                           corpus[static_cast<size_t>(j)]);
      dist[static_cast<size_t>(i) * n + j] = d;
      dist[static_cast<size_t>(j) * n + i] = d;
    }
  int checked = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        if (a == b || b == c || a == c) continue;
        CAPTURE(a);
        CAPTURE(b);
        CAPTURE(c);
        REQUIRE(dist[static_cast<size_t>(a) * n + c] <=
                dist[static_cast<size_t>(a) * n + b] +
                    dist[static_cast<size_t>(b) * n + c] + 1e-6);
        ++checked;
      }
  CHECK(checked == n * (n - 1) * (n - 2));
}

TEST_CASE("parameter and flop counting entry points") {
  ParamSet empty;
  CHECK(count_params(empty) == 0);
  ParamSet dense;
  dense.add({"d.fc2.w", ParamRole::kDiscriminator, ParamKind::kDenseW, {64, 256},
             std::vector<double>(64 * 256, 0.0)});
  dense.add({"d.fc2.b", ParamRole::kDiscriminator, ParamKind::kDenseB, {64},
             std::vector<double>(64, 0.0)});
  CHECK(count_params(dense) == 16448);
  CHECK(flops_from_macs(16384) == 32768);
}

TEST_CASE("format_g17 renders round-trip-exact decimals") {
  for (const double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5, 0.0}) {
    const std::string s = format_g17(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
  CHECK(format_g17(1.5) == "1.5");
  CHECK(format_g17(0.25) == "0.25");
  CHECK(format_g17(11.0) == "11");
}

TEST_CASE("csv report emission") {
  namespace fs = std::filesystem;
  const std::string dir = "tmp_metrics_report";
  fs::remove_all(dir);
  fs::create_directories(dir);

  SUBCASE("empty records give a header-only file") {
    emit_report({}, dir + "/empty.csv");
    CHECK(slurp(dir + "/empty.csv") ==
          std::string(kReportHeader) + "\n");
  }
  SUBCASE("one record emits fields in declared order") {
    RoundRecord r;
    r.round = 3;
    r.client_count = 4;
    r.strategy = "fedgai";
    r.n_iter = 11;
    r.bytes_up = 1000;
    r.bytes_down = 2000;
    r.upload_s = 1.5;
    r.aggregate_s = 0.25;
    r.download_s = 0.75;
    r.mean_proxy_fid = 12.5;
    r.mean_lpips_proxy = 0.125;
    r.wall_time_total = 2.5;
    emit_report({r}, dir + "/one.csv");
    CHECK(slurp(dir + "/one.csv") ==
          std::string(kReportHeader) +
              "\n3,4,fedgai,11,1000,2000,1.5,0.25,0.75,12.5,0.125,2.5\n");
    emit_report({r}, dir + "/one_again.csv");
    CHECK(slurp(dir + "/one_again.csv") == slurp(dir + "/one.csv"));
  }
  SUBCASE("fid chart lists one polyline per strategy") {
    std::vector<RoundRecord> rec;
    for (int round = 0; round < 3; ++round)
      for (const char* strat : {"fedgai", "fedavg"}) {
        RoundRecord r;
        r.round = round;
        r.strategy = strat;
        r.mean_proxy_fid = 10.0 - round + (strat[3] == 'a' ? 0.5 : 0.0);
        rec.push_back(r);
      }
    emit_fid_chart(rec, dir + "/chart.svg");
    const std::string svg = slurp(dir + "/chart.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("fedgai") != std::string::npos);
    CHECK(svg.find("fedavg") != std::string::npos);
    size_t polylines = 0;
    for (size_t pos = 0; (pos = svg.find("<polyline", pos)) != std::string::npos;
         ++pos)
      ++polylines;
    CHECK(polylines == 2);
    emit_fid_chart(rec, dir + "/chart2.svg");
    CHECK(slurp(dir + "/chart2.svg") == svg);
  }
  fs::remove_all(dir);
}
