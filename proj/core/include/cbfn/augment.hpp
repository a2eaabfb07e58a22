#pragma once

#include "cbfn/dataset.hpp"
#include "cbfn/rng.hpp"

namespace cbfn {

// Separable bilinear interpolation with half-pixel sample centers
// (align_corners = false).
Image resize_bilinear(const Image& img, int out_h, int out_w);

Image flip_horizontal(const Image& img);

struct AugmentConfig {
  int crop = 256;
  double scale_min = 0.6;
  double scale_max = 1.0;
  double flip_prob = 0.5;
};

struct PatchPair {
  Image input;
  Image target;
};

// True when the pair is large enough to yield a crop (short side >= crop).
bool augmentable(const SamplePair& pair, int crop);

// One scale factor (clamped so the scaled short side still covers the
// crop), one crop offset, one flip decision; all three shared between
// input and target. Draw order from `rng`: scale, offset y, offset x, flip.
PatchPair augment(const SamplePair& pair, Rng& rng, const AugmentConfig& config);

}  // namespace cbfn
