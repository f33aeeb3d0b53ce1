#include "fedgai/models.hpp"

#include <cmath>

namespace fedgai {

namespace {

constexpr double kLeakySlope = 0.2;
constexpr double kBnMomentum = 0.1;
constexpr double kBnEps = 1e-5;

Tensor gaussian_tensor(std::vector<int> shape, Rng& rng, double scale,
                       bool requires_grad) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.values()) v = scale * rng.gaussian();
  return t;
}

double he_scale(int fan_in) {
  return std::sqrt(2.0 / (fan_in * (1.0 + kLeakySlope * kLeakySlope)));
}

Tensor unit_vector(int n, Rng& rng) {
  Tensor u = gaussian_tensor({n}, rng, 1.0, false);
  double norm = 0.0;
  for (double v : u.values()) norm += v * v;
  norm = std::sqrt(std::max(norm, 1e-12));
  for (double& v : u.values()) v /= norm;
  return u;
}

}  // namespace

// ---------------------------------------------------------------------------
// ConvBlock
// ---------------------------------------------------------------------------

ConvBlock ConvBlock::make(int c_in, int c_out, bool separable, Rng& rng) {
  ConvBlock blk;
  blk.separable = separable;
  blk.c_in = c_in;
  blk.c_out = c_out;
  if (separable) {
    blk.w_dw = gaussian_tensor({c_in, 3, 3}, rng, he_scale(9), true);
    blk.w_pw = gaussian_tensor({c_out, c_in, 1, 1}, rng, he_scale(c_in), true);
    blk.u_dw = unit_vector(c_in, rng);
    blk.u_pw = unit_vector(c_out, rng);
  } else {
    blk.w = gaussian_tensor({c_out, c_in, 3, 3}, rng, he_scale(c_in * 9), true);
    blk.u = unit_vector(c_out, rng);
  }
  blk.b = Tensor::zeros({c_out}, true);
  blk.bn_gamma = Tensor::full({c_out}, 1.0, true);
  blk.bn_beta = Tensor::zeros({c_out}, true);
  blk.bn_rm = Tensor::zeros({c_out});
  blk.bn_rv = Tensor::full({c_out}, 1.0);
  return blk;
}

Tensor ConvBlock::forward(const Tensor& x, BnMode bn_mode) {
  Tensor y;
  if (separable) {
    Tensor wd = spectral_normalize(w_dw, u_dw);
    Tensor wp = spectral_normalize(w_pw, u_pw);
    y = depthwise_separable_conv2d(x, wd, wp, b, 1, 1);
  } else {
    y = conv2d(x, spectral_normalize(w, u), b, 1, 1);
  }
  y = batch_norm2d(y, bn_gamma, bn_beta, bn_rm, bn_rv, kBnMomentum, kBnEps, bn_mode);
  return leaky_relu(y, kLeakySlope);
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

Generator::Generator(uint64_t seed, bool student) : student_(student) {
  Rng rng(mix_seed(seed, student ? 0x57f0 : 0x7e4c));
  for (int i = 0; i < 4; ++i) {
    const bool sep = student && i >= 2;  // last two stages
    blocks_.push_back(
        ConvBlock::make(gen_block_in(i), kGenBlockOut[static_cast<size_t>(i)], sep, rng));
  }
  head_w_ = gaussian_tensor({1, kGenBlockOut[3], 3, 3}, rng,
                            he_scale(kGenBlockOut[3] * 9), true);
  head_b_ = Tensor::zeros({1}, true);
}

Generator::Output Generator::forward(const FeatureMaps& mixed, BnMode bn_mode) {
  if (mixed.levels.size() != 4)
    fail("[generator] expected 4 mixed levels, got " +
         std::to_string(mixed.levels.size()));
  for (int j = 0; j < 4; ++j) {
    const Tensor& lv = mixed.levels[static_cast<size_t>(j)];
    if (lv.rank() != 4 || lv.dim(1) != kEncoderChannels[static_cast<size_t>(j)])
      fail("[generator] level " + std::to_string(j + 1) + " shape " +
           shape_str(lv.shape()) + " does not match the channel plan");
  }
  Output out;
  Tensor x = mixed.levels[3];
  for (int i = 0; i < 4; ++i) {
    x = blocks_[static_cast<size_t>(i)].forward(x, bn_mode);
    out.blocks.push_back(x);
    if (i < 3) {
      x = nearest_upsample2x(x);
      x = concat_channels({x, mixed.levels[static_cast<size_t>(2 - i)]});
    }
  }
  out.sketch = tanh_t(conv2d(x, head_w_, head_b_, 1, 1));
  return out;
}

std::vector<Generator::NamedParam> Generator::param_table() {
  std::vector<NamedParam> t;
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const std::string base = "g.block" + std::to_string(i + 1);
    ConvBlock& blk = blocks_[i];
    if (blk.separable) {
      t.push_back({base + ".conv.dw", ParamKind::kConvW, &blk.w_dw});
      t.push_back({base + ".conv.pw", ParamKind::kConvW, &blk.w_pw});
    } else {
      t.push_back({base + ".conv.w", ParamKind::kConvW, &blk.w});
    }
    t.push_back({base + ".conv.b", ParamKind::kConvB, &blk.b});
    t.push_back({base + ".bn.gamma", ParamKind::kBnGamma, &blk.bn_gamma});
    t.push_back({base + ".bn.beta", ParamKind::kBnBeta, &blk.bn_beta});
    t.push_back({base + ".bn.running_mean", ParamKind::kBnRunningMean, &blk.bn_rm});
    t.push_back({base + ".bn.running_var", ParamKind::kBnRunningVar, &blk.bn_rv});
    if (blk.separable) {
      t.push_back({base + ".conv.u_dw", ParamKind::kOther, &blk.u_dw});
      t.push_back({base + ".conv.u_pw", ParamKind::kOther, &blk.u_pw});
    } else {
      t.push_back({base + ".conv.u", ParamKind::kOther, &blk.u});
    }
  }
  t.push_back({"g.head.w", ParamKind::kConvW, &head_w_});
  t.push_back({"g.head.b", ParamKind::kConvB, &head_b_});
  return t;
}

std::vector<Generator::NamedParam> Generator::param_table() const {
  return const_cast<Generator*>(this)->param_table();
}

ParamSet Generator::export_params() const {
  ParamSet p;
  for (const auto& np : param_table())
    p.add({np.name, ParamRole::kGenerator, np.kind, np.t->shape(), np.t->values()});
  return p;
}

void Generator::load_params(const ParamSet& p) {
  auto table = param_table();
  for (const auto& e : p.entries()) {
    Tensor* dst = nullptr;
    for (const auto& np : table)
      if (np.name == e.name) {
        dst = np.t;
        break;
      }
    if (!dst) fail("[generator] unknown parameter in checkpoint: " + e.name);
    if (dst->shape() != e.shape)
      fail("[generator] shape mismatch for " + e.name + ": model " +
           shape_str(dst->shape()) + " vs checkpoint " + shape_str(e.shape));
    dst->values() = e.values;
  }
}

std::vector<Tensor*> Generator::trainable() {
  std::vector<Tensor*> out;
  for (const auto& np : param_table())
    if (np.kind == ParamKind::kConvW || np.kind == ParamKind::kConvB ||
        np.kind == ParamKind::kBnGamma || np.kind == ParamKind::kBnBeta)
      out.push_back(np.t);
  return out;
}

std::vector<LayerDesc> Generator::layer_table(bool student) {
  std::vector<LayerDesc> t;
  for (int i = 0; i < 4; ++i) {
    LayerDesc d;
    d.name = "g.block" + std::to_string(i + 1);
    d.separable = student && i >= 2;
    d.c_in = gen_block_in(i);
    d.c_out = kGenBlockOut[static_cast<size_t>(i)];
    d.k = 3;
    d.spatial_div = 8 >> i;  // 8, 4, 2, 1
    d.bias = true;
    d.bn = true;
    d.sn = true;
    t.push_back(d);
  }
  LayerDesc head;
  head.name = "g.head";
  head.c_in = kGenBlockOut[3];
  head.c_out = 1;
  head.k = 3;
  head.spatial_div = 1;
  head.bias = true;
  t.push_back(head);
  return t;
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

Discriminator::Discriminator(uint64_t seed) {
  Rng rng(mix_seed(seed, 0xd15c));
  const int in = kEncoderChannels[3] * kEncoderChannels[3];  // flattened Gram
  w1_ = gaussian_tensor({256, in}, rng, he_scale(in), true);
  b1_ = Tensor::zeros({256}, true);
  w2_ = gaussian_tensor({64, 256}, rng, he_scale(256), true);
  b2_ = Tensor::zeros({64}, true);
  w3_ = gaussian_tensor({1, 64}, rng, std::sqrt(1.0 / 64.0), true);
  b3_ = Tensor::zeros({1}, true);
}

Tensor Discriminator::forward(const Tensor& gram4) {
  const int in = kEncoderChannels[3] * kEncoderChannels[3];
  Tensor x;
  if (gram4.rank() == 3 && gram4.dim(1) * gram4.dim(2) == in)
    x = reshape(gram4, {gram4.dim(0), in});
  else if (gram4.rank() == 2 && gram4.dim(1) == in)
    x = gram4;
  else
    fail("[discriminator] expected (N,64,64) Gram input, got " +
         shape_str(gram4.shape()));
  // Gram entries are orders of magnitude below the unit scale the He-init
  // layers expect, which would pin every logit to ~0; standardize each
  // sample's gram vector so the critic operates in its active range.
  {
    const int n = x.dim(0);
    Tensor x4 = reshape(x, {1, n, in, 1});
    auto [mu, sd] = channel_mean_std(x4);
    Tensor sd_f = clamp_t(sd, 1e-8, 1e300);
    Tensor scale = div(Tensor::full({n}, 1.0), sd_f);
    Tensor shift = scalar_mul(div(mu, sd_f), -1.0);
    x = reshape(channel_affine(x4, scale, shift), {n, in});
  }
  x = leaky_relu(bias_add_rows(matmul(x, transpose2d(w1_)), b1_), kLeakySlope);
  x = leaky_relu(bias_add_rows(matmul(x, transpose2d(w2_)), b2_), kLeakySlope);
  return sigmoid_t(bias_add_rows(matmul(x, transpose2d(w3_)), b3_));
}

ParamSet Discriminator::export_params() const {
  ParamSet p;
  auto add = [&](const char* name, ParamKind kind, const Tensor& t) {
    p.add({name, ParamRole::kDiscriminator, kind, t.shape(), t.values()});
  };
  add("d.fc1.w", ParamKind::kDenseW, w1_);
  add("d.fc1.b", ParamKind::kDenseB, b1_);
  add("d.fc2.w", ParamKind::kDenseW, w2_);
  add("d.fc2.b", ParamKind::kDenseB, b2_);
  add("d.fc3.w", ParamKind::kDenseW, w3_);
  add("d.fc3.b", ParamKind::kDenseB, b3_);
  return p;
}

void Discriminator::load_params(const ParamSet& p) {
  auto match = [&](const std::string& name) -> Tensor* {
    if (name == "d.fc1.w") return &w1_;
    if (name == "d.fc1.b") return &b1_;
    if (name == "d.fc2.w") return &w2_;
    if (name == "d.fc2.b") return &b2_;
    if (name == "d.fc3.w") return &w3_;
    if (name == "d.fc3.b") return &b3_;
    return nullptr;
  };
  for (const auto& e : p.entries()) {
    Tensor* dst = match(e.name);
    if (!dst) fail("[discriminator] unknown parameter in checkpoint: " + e.name);
    if (dst->shape() != e.shape)
      fail("[discriminator] shape mismatch for " + e.name + ": model " +
           shape_str(dst->shape()) + " vs checkpoint " + shape_str(e.shape));
    dst->values() = e.values;
  }
}

std::vector<Tensor*> Discriminator::trainable() {
  return {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_};
}

std::vector<std::pair<std::string, Tensor*>> Discriminator::named_trainable() {
  return {{"d.fc1.w", &w1_}, {"d.fc1.b", &b1_}, {"d.fc2.w", &w2_},
          {"d.fc2.b", &b2_}, {"d.fc3.w", &w3_}, {"d.fc3.b", &b3_}};
}

std::vector<LayerDesc> Discriminator::layer_table() {
  const int in = kEncoderChannels[3] * kEncoderChannels[3];
  auto dense = [](const char* name, int c_in, int c_out) {
    LayerDesc d;
    d.name = name;
    d.c_in = c_in;
    d.c_out = c_out;
    d.k = 0;  // dense layer marker
    d.bias = true;
    return d;
  };
  return {dense("d.fc1", in, 256), dense("d.fc2", 256, 64), dense("d.fc3", 64, 1)};
}

std::vector<LayerDesc> encoder_layer_table() {
  std::vector<LayerDesc> t;
  int c_in = 3;
  for (int s = 0; s < kFeatureLevels; ++s) {
    const int c_out = kEncoderChannels[static_cast<size_t>(s)];
    for (int conv = 1; conv <= 2; ++conv) {
      LayerDesc d;
      d.name = "enc.stage" + std::to_string(s + 1) + ".conv" + std::to_string(conv);
      d.c_in = conv == 1 ? c_in : c_out;
      d.c_out = c_out;
      d.k = 3;
      d.spatial_div = 1 << s;
      d.bias = false;
      t.push_back(d);
    }
    c_in = c_out;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Closed-form accounting
// ---------------------------------------------------------------------------

int64_t count_macs(const std::vector<LayerDesc>& table, int h, int w) {
  int64_t total = 0;
  for (const auto& d : table) {
    if (d.k == 0) {  // dense
      total += static_cast<int64_t>(d.c_out) * d.c_in;
      continue;
    }
    if (h % d.spatial_div != 0 || w % d.spatial_div != 0)
      fail("[count_macs] resolution " + std::to_string(h) + "x" +
           std::to_string(w) + " not divisible by " + std::to_string(d.spatial_div) +
           " for layer " + d.name);
    const int64_t hw = static_cast<int64_t>(h / d.spatial_div) * (w / d.spatial_div);
    if (d.separable)
      total += static_cast<int64_t>(d.c_in) * d.k * d.k * hw +
               static_cast<int64_t>(d.c_out) * d.c_in * hw;
    else
      total += static_cast<int64_t>(d.c_out) * d.c_in * d.k * d.k * hw;
  }
  return total;
}

int64_t count_layer_params(const std::vector<LayerDesc>& table, bool include_buffers) {
  int64_t total = 0;
  for (const auto& d : table) {
    if (d.k == 0) {
      total += static_cast<int64_t>(d.c_out) * d.c_in;
    } else if (d.separable) {
      total += static_cast<int64_t>(d.c_in) * d.k * d.k +
               static_cast<int64_t>(d.c_out) * d.c_in;
    } else {
      total += static_cast<int64_t>(d.c_out) * d.c_in * d.k * d.k;
    }
    if (d.bias) total += d.c_out;
    if (d.bn) total += 2 * static_cast<int64_t>(d.c_out);  // gamma, beta
    if (include_buffers) {
      if (d.bn) total += 2 * static_cast<int64_t>(d.c_out);  // running stats
      if (d.sn) total += d.separable ? d.c_in + d.c_out : d.c_out;
    }
  }
  return total;
}

}  // namespace fedgai
