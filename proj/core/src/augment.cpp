#include "cbfn/augment.hpp"

#include <algorithm>
#include <cmath>

namespace cbfn {

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ConfigError("resize_bilinear: non-positive target size");
  }
  if (out_h == img.h && out_w == img.w) return img;

  Image out = Image::make(out_h, out_w, img.c);
  const double sy = static_cast<double>(img.h) / out_h;
  const double sx = static_cast<double>(img.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.w - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < img.c; ++ch) {
        const double top = (1.0 - wx) * img.at(ch, y0, x0) + wx * img.at(ch, y0, x1);
        const double bot = (1.0 - wx) * img.at(ch, y1, x0) + wx * img.at(ch, y1, x1);
        out.at(ch, y, x) = static_cast<float>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out = Image::make(img.h, img.w, img.c);
  for (int ch = 0; ch < img.c; ++ch)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) out.at(ch, y, x) = img.at(ch, y, img.w - 1 - x);
  return out;
}

bool augmentable(const SamplePair& pair, int crop) {
  return std::min(pair.input.h, pair.input.w) >= crop;
}

namespace {

Image crop_image(const Image& img, int oy, int ox, int size) {
  Image out = Image::make(size, size, img.c);
  for (int ch = 0; ch < img.c; ++ch)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(ch, y, x) = img.at(ch, oy + y, ox + x);
  return out;
}

}  // namespace

PatchPair augment(const SamplePair& pair, Rng& rng, const AugmentConfig& config) {
  if (!augmentable(pair, config.crop)) {
    throw UsageError("augment: sample " + pair.id + " short side smaller than crop " +
                     std::to_string(config.crop));
  }

  double scale = rng.uniform(config.scale_min, config.scale_max);
  const int short_side = std::min(pair.input.h, pair.input.w);
  const double feasible = static_cast<double>(config.crop) / short_side;
  scale = std::max(scale, feasible);

  const int sh = std::max(config.crop,
                          static_cast<int>(std::lround(pair.input.h * scale)));
  const int sw = std::max(config.crop,
                          static_cast<int>(std::lround(pair.input.w * scale)));

  Image in_scaled = resize_bilinear(pair.input, sh, sw);
  Image tg_scaled = resize_bilinear(pair.target, sh, sw);

  const int oy = static_cast<int>(rng.uniform_int(sh - config.crop + 1));
  const int ox = static_cast<int>(rng.uniform_int(sw - config.crop + 1));
  Image in_patch = crop_image(in_scaled, oy, ox, config.crop);
  Image tg_patch = crop_image(tg_scaled, oy, ox, config.crop);

  if (rng.bernoulli(config.flip_prob)) {
    in_patch = flip_horizontal(in_patch);
    tg_patch = flip_horizontal(tg_patch);
  }
  return PatchPair{std::move(in_patch), std::move(tg_patch)};
}

}  // namespace cbfn
