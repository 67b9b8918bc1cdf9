#pragma once

#include "vp/real.hpp"

#include <cstdint>
#include <vector>

namespace vp {

// Raw 8-bit RGB image, row-major, channel-interleaved.
struct RawImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // width * height * 3

  uint8_t* pixel(int x, int y) { return rgb.data() + (y * width + x) * 3; }
  const uint8_t* pixel(int x, int y) const { return rgb.data() + (y * width + x) * 3; }
};

// Square normalized float image X_v, values in [0,1].
struct ImageTensor {
  int size = 0;  // height == width
  std::vector<real> values;  // size * size * 3

  real at(int x, int y, int c) const { return values[(y * size + x) * 3 + c]; }
};

}  // namespace vp
