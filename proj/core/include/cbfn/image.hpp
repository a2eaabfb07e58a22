#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbfn/errors.hpp"
#include "cbfn/tensor.hpp"

namespace cbfn {

// Planar (c, h, w) float image with values nominally in [0, 1].
struct Image {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<float> data;  // c*h*w, channel-major

  static Image make(int h, int w, int c, float fill = 0.0f) {
    Image img;
    img.h = h;
    img.w = w;
    img.c = c;
    img.data.assign(static_cast<std::size_t>(h) * w * c, fill);
    return img;
  }

  float& at(int ch, int y, int x) {
    return data[(static_cast<std::size_t>(ch) * h + y) * w + x];
  }
  float at(int ch, int y, int x) const {
    return data[(static_cast<std::size_t>(ch) * h + y) * w + x];
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(h) * w * c; }
};

// rgb8 <-> float conversions and tensor packing.

// Interleaved 8-bit image as read from or written to a PNG.
struct ImageU8 {
  int h = 0;
  int w = 0;
  int c = 0;  // 1 (gray) or 3 (rgb)
  std::vector<std::uint8_t> pixels;  // h*w*c, row-major interleaved
};

Image to_float(const ImageU8& img);                // values / 255
ImageU8 to_u8(const Image& img);                   // clamp to [0,1], round to 8 bits
Tensor<float> image_to_tensor(const Image& img);   // (1, c, h, w)
Image tensor_to_image(const Tensor<float>& t);     // first batch entry

}  // namespace cbfn
