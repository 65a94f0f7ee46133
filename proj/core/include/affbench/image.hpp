#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "affbench/tensor.hpp"

namespace affbench {

/// 8-bit RGB image, row-major, interleaved channels.
struct RawImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // height*width*3, RGB

  uint8_t& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
};

/// Decode an RGB image from disk. Throws on missing/undecodable files and
/// on non-3-channel content.
RawImage load_image(const std::string& path);

void save_png(const std::string& path, const RawImage& img);

/// Bilinear resize with half-pixel centre alignment, computed in float.
/// `src` values are arbitrary floats laid out [c][y][x].
Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w);

/// Full preprocessing: [0,1] scaling, bilinear resize to 128x128, then
/// per-channel standardization (x - 0.5) / 0.5. Output range is [-1, 1].
Tensor preprocess(const RawImage& raw);

/// Same pipeline for an already-scaled [0,1] float CHW image.
Tensor preprocess_chw(const Tensor& chw);

constexpr int kInputSize = 128;

}  // namespace affbench
