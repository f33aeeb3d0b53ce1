#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedgai/encoder.hpp"
#include "fedgai/params.hpp"
#include "fedgai/tensor.hpp"

namespace fedgai {

// ---------------------------------------------------------------------------
// Sketch generator: four ConvBlock stages walk the mixed feature pyramid from
// the deepest level (H/8) up to full resolution, each block's output upsampled
// and concatenated with the next shallower mixed level; a 3x3 conv + tanh head
// emits the 1-channel sketch in [-1, 1].
//
// The channel plan concentrates parameters in block 1 (cheap at H/8) and MAC
// volume in blocks 3-4, which is where the student variant's depthwise-
// separable substitution pays off.
// ---------------------------------------------------------------------------

inline constexpr std::array<int, 4> kGenBlockOut = {7168, 8, 512, 16};

// Block input channels follow from the topology: block 1 consumes the deepest
// encoder level; later blocks consume previous output + skip level.
constexpr int gen_block_in(int i) {
  return i == 0 ? kEncoderChannels[3]
                : kGenBlockOut[static_cast<size_t>(i - 1)] +
                      kEncoderChannels[static_cast<size_t>(3 - i)];
}

// Closed-form layer description for parameter and MAC accounting.
struct LayerDesc {
  std::string name;
  bool separable = false;
  int c_in = 0;
  int c_out = 0;
  int k = 0;
  int spatial_div = 1;  // layer output is (H/spatial_div, W/spatial_div)
  bool bias = true;
  bool bn = false;
  bool sn = false;
};

// conv(3x3, pad 1, spectral-normalized weight) + bias -> batch norm ->
// leaky_relu(0.2). Separable blocks replace the conv with depthwise (3x3) +
// pointwise (1x1), both spectral-normalized.
struct ConvBlock {
  bool separable = false;
  int c_in = 0, c_out = 0;
  Tensor w;            // (c_out, c_in, 3, 3) standard
  Tensor w_dw, w_pw;   // (c_in, 3, 3), (c_out, c_in, 1, 1) separable
  Tensor b;
  Tensor bn_gamma, bn_beta, bn_rm, bn_rv;
  Tensor u, u_dw, u_pw;  // spectral-norm power-iteration state

  static ConvBlock make(int c_in, int c_out, bool separable, Rng& rng);
  Tensor forward(const Tensor& x, BnMode bn_mode);
};

class Generator {
 public:
  struct Output {
    Tensor sketch;                 // (N, 1, H, W), values in [-1, 1]
    std::vector<Tensor> blocks;    // 4 block outputs, deepest stage first
  };

  Generator(uint64_t seed, bool student);

  // mixed: 4 levels shallow->deep, level j at spatial (H/2^j, W/2^j) with
  // kEncoderChannels[j] channels.
  Output forward(const FeatureMaps& mixed, BnMode bn_mode);

  bool is_student() const { return student_; }
  ParamSet export_params() const;
  // Copies every entry of p into the matching named parameter; entries missing
  // from p keep their local values. Unknown names or shape mismatches fail.
  void load_params(const ParamSet& p);
  std::vector<Tensor*> trainable();

  static std::vector<LayerDesc> layer_table(bool student);

 private:
  struct NamedParam {
    std::string name;
    ParamKind kind;
    Tensor* t;
  };
  std::vector<NamedParam> param_table();
  std::vector<NamedParam> param_table() const;

  std::vector<ConvBlock> blocks_;
  Tensor head_w_, head_b_;
  bool student_;
};

// MLP over the flattened level-4 Gram matrix:
// dense(4096->256) + leaky -> dense(256->64) + leaky -> dense(64->1) + sigmoid.
class Discriminator {
 public:
  explicit Discriminator(uint64_t seed);

  // gram4: (N, 64, 64) or (N, 4096); returns per-sample probability (N, 1).
  Tensor forward(const Tensor& gram4);

  ParamSet export_params() const;
  void load_params(const ParamSet& p);
  std::vector<Tensor*> trainable();
  // Same order as export_params; used to pair live parameters with a
  // checkpoint by name (e.g. proximal penalties against a fused set).
  std::vector<std::pair<std::string, Tensor*>> named_trainable();

  static std::vector<LayerDesc> layer_table();

 private:
  Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

std::vector<LayerDesc> encoder_layer_table();

// Closed-form accounting over a layer table at a given input resolution.
int64_t count_macs(const std::vector<LayerDesc>& table, int h, int w);
int64_t count_layer_params(const std::vector<LayerDesc>& table,
                           bool include_buffers = true);

}  // namespace fedgai
