#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fedgai/params.hpp"
#include "fedgai/tensor.hpp"

namespace fedgai {

// Four feature levels at spatial sizes H, H/2, H/4, H/8.
struct FeatureMaps {
  std::vector<Tensor> levels;
};

inline constexpr int kFeatureLevels = 4;
inline constexpr std::array<int, 4> kEncoderChannels = {8, 16, 32, 64};
inline constexpr double kStyleEps = 1e-8;

// Frozen convolutional feature extractor. Each stage is two bias-free
// conv(3x3, pad 1) + leaky_relu(0.2) layers; the stage output is tapped BEFORE
// the 2x2 max-pool that feeds the next stage. Weights are orthogonal-row
// initialized from the seed (gain tuned for the leaky slope) and never train,
// so the same seed always yields bit-identical features. Gradients still flow
// through encode() into the input image.
class PerceptualEncoder {
 public:
  explicit PerceptualEncoder(uint64_t seed);

  // image: (N, 1 or 3, H, W) with H, W divisible by 8; grayscale inputs are
  // replicated across the three input channels.
  FeatureMaps encode(const Tensor& image) const;

  // Pooled level-4 features: (N, 64). The global descriptor used by the
  // semantic-consistency loss and the decorrelation regularizer.
  Tensor pooled_final(const FeatureMaps& f) const;

  ParamSet export_params() const;

 private:
  std::vector<Tensor> w1_, w2_;  // per stage
};

// Per-level, per-channel mean and std of encoded sketches over an entire
// training set (population statistics over batch, height, width).
struct StyleStats {
  std::vector<Tensor> mean;  // level j: shape (C_j)
  std::vector<Tensor> std;   // level j: shape (C_j), floored at kStyleEps
};

StyleStats compute_style_stats(const PerceptualEncoder& enc,
                               const std::vector<Tensor>& sketches,
                               int batch_size = 16);

// Per level j, channel c:
//   out = sigma_stats * (x - mu_batch(x)) / (sigma_batch(x) + eps) + mu_stats
// with batch statistics over batch, height, and width. Differentiable in x.
FeatureMaps adain_sd(const FeatureMaps& content, const StyleStats& stats);

}  // namespace fedgai
