#pragma once

#include <cstdint>
#include <string>

#include "cbfn/errors.hpp"

namespace cbfn {

// Dense 4-D extent in (batch, channel, height, width) order.
struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t numel() const { return n * c * h * w; }

  bool operator==(const Shape&) const = default;

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }

  void check_valid(const char* who) const {
    if (n < 0 || c < 0 || h < 0 || w < 0) {
      throw ShapeError(std::string(who) + ": negative extent in shape " + str());
    }
  }
};

// Per-axis (height, width) padding amount.
struct Pad2 {
  int h = 0;
  int w = 0;
};

}  // namespace cbfn
