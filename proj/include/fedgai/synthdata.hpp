#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedgai/common.hpp"
#include "fedgai/tensor.hpp"

namespace fedgai {

// Procedural garment dataset: color silhouette photos paired with styled
// contour sketches. Each "designer" is a StyleProfile; differing profiles
// yield measurably distinct sketch statistics, which is what the federated
// experiments need from their non-identical clients.

enum class GarmentClass { kTop = 0, kSkirt, kVest, kTrouser, kDress };
constexpr int kGarmentClassCount = 5;

const char* garment_name(GarmentClass c);
GarmentClass garment_from_name(const std::string& name);

// Flat fill color per class, chosen as exact multiples of 1/255 so a
// generated pair survives a PPM/PGM round trip bit-exactly.
extern const double kGarmentColors[kGarmentClassCount][3];

// Controls how a client draws contours. Widths are pixels; probabilities and
// densities live in [0,1]. seed drives every random choice the profile makes.
struct StyleProfile {
  double stroke_width_px = 1.0;
  double jitter_amplitude_px = 0.0;
  double corner_rounding = 0.0;
  double dash_probability = 0.0;
  double detail_density = 0.0;
  uint64_t seed = 0;

  void validate() const;  // throws Error on out-of-range fields
};

// One training example. image is (3,H,W) in [0,1] (white background, flat
// garment color); sketch is (1,H,W) in [0,1] (ink = 1, paper = 0).
struct StylePair {
  Tensor image;
  Tensor sketch;
  GarmentClass garment_class = GarmentClass::kTop;
  int style_id = 0;
};

// Stroke stamp: a pixel on a stroke of width w covers row/col offsets
// [-(w-1)/2, w/2] (integer division), i.e. w=1 -> {0}, w=2 -> {0,1},
// w=3 -> {-1,0,1}, w=4 -> {-1,..,2}. "Dilated to stroke width" in the
// contract means exactly this stamp applied to every boundary pixel.
int stroke_stamp_lo(int width);
int stroke_stamp_hi(int width);

// Generates n_pairs examples at resolution x resolution. Garment classes and
// shape handles are drawn from per-pair seeds derived from profile.seed, so
// the output is a pure function of (profile, n_pairs, resolution).
// With jitter, dash probability, rounding and detail density all zero the
// sketch ink is exactly the image silhouette boundary dilated to the stroke
// width. Requires resolution divisible by 8 and n_pairs >= 1.
std::vector<StylePair> generate_dataset(const StyleProfile& profile,
                                        int n_pairs, int resolution,
                                        int style_id = 0);

enum class AugmentOp { kCrop = 0, kHflip, kRotate, kScale, kLineErase, kLineThicken };

// Applies the requested ops in the fixed order crop, hflip, rotate, scale,
// line_erase, line_thicken (duplicates ignored). Geometric ops transform
// image and sketch identically; the line ops touch only the sketch.
//   crop:         random window of >= 75% area, resized back (bilinear)
//   hflip:        mirror columns (an involution)
//   rotate:       uniform angle in [-15, 15] degrees, bilinear resample
//   scale:        uniform factor in [0.9, 1.1] about the center, bilinear
//   line_erase:   split ink into ~24-px connected chunks, drop each w.p. 0.1
//   line_thicken: with probability 0.5, dilate ink by 1 px (3x3 max filter)
StylePair augment(const StylePair& pair, const std::vector<AugmentOp>& ops,
                  uint64_t seed);

// Pixel conventions: [0,1] on disk and in StylePair, [-1,1] at model input.
Tensor to_model_input(const Tensor& t);    // v -> 2v - 1
Tensor from_model_output(const Tensor& t); // v -> clamp((v+1)/2, 0, 1)

// Binary image files. write_ppm expects (3,H,W), write_pgm (1,H,W), both in
// [0,1]; values are quantized to round(v*255). Readers accept only maxval 255
// and return tensors with values k/255.
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);
void write_pgm(const std::string& path, const Tensor& sketch);
Tensor read_pgm(const std::string& path);

// Writes {prefix}_NNNN.ppm / .pgm plus {prefix}_manifest.json (a JSON list of
// {image, sketch, garment_class, style_id} with paths relative to dir).
// Returns the manifest path. load_dataset reads such a manifest back.
std::string save_dataset(const std::string& dir,
                         const std::vector<StylePair>& pairs,
                         const std::string& prefix = "pair");
std::vector<StylePair> load_dataset(const std::string& manifest_path);

}  // namespace fedgai
