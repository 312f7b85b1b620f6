// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vedocr/tensor.hpp"

namespace vedocr {

/// 8-bit grayscale raster; 255 = paper, 0 = ink.
struct GrayImage {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<uint8_t> pixels; // row-major

    uint8_t at(int64_t y, int64_t x) const { return pixels[y * width + x]; }
    void set(int64_t y, int64_t x, uint8_t v) { pixels[y * width + x] = v; }
};

GrayImage make_image(int64_t height, int64_t width, uint8_t fill = 255);

/// Binary PGM (P5), maxval 255.
GrayImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const GrayImage& image);

/// Header-only sanity check used by manifest validation.
bool probe_pgm(const std::string& path);

/// Aspect-preserving bilinear resize to fit inside (target_h, target_w),
/// background-padded on the right/bottom, intensities scaled to [0,1].
/// Targets must be divisible by the patch size.
Tensor preprocess(const GrayImage& image, int64_t target_h, int64_t target_w,
                  int64_t patch);

/// Inverse of preprocess's value scaling (testing aid).
GrayImage tensor_to_image(const Tensor& t);

} // namespace vedocr
