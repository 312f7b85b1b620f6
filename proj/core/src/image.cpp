// SPDX-License-Identifier: Apache-2.0
#include "vedocr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vedocr/error.hpp"

namespace vedocr {

GrayImage make_image(int64_t height, int64_t width, uint8_t fill) {
    if (height < 1 || width < 1) {
        throw ContractError("image: dimensions must be positive");
    }
    GrayImage img;
    img.height = height;
    img.width = width;
    img.pixels.assign(static_cast<size_t>(height * width), fill);
    return img;
}

namespace {

int read_pgm_token(std::istream& in) {
    // Skips whitespace and '#' comments between header tokens.
    int c = in.get();
    while (c == '#' || std::isspace(c)) {
        if (c == '#') {
            while (c != '\n' && c != EOF) c = in.get();
        }
        c = in.get();
    }
    int value = 0;
    bool any = false;
    while (std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) {
        throw ParseError("pgm: malformed header");
    }
    return value;
}

} // namespace

GrayImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("pgm: cannot open " + path);
    }
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '5') {
        throw ParseError("pgm: " + path + " is not a P5 file");
    }
    const int width = read_pgm_token(in);
    const int height = read_pgm_token(in);
    const int maxval = read_pgm_token(in);
    if (maxval != 255) {
        throw ParseError("pgm: " + path + " has maxval " +
                         std::to_string(maxval) + ", expected 255");
    }
    GrayImage img = make_image(height, width);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw ParseError("pgm: " + path + " is truncated");
    }
    return img;
}

void write_pgm(const std::string& path, const GrayImage& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("pgm: cannot write " + path);
    }
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
    if (!out) {
        throw IoError("pgm: failed writing " + path);
    }
}

bool probe_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '5') return false;
    try {
        const int width = read_pgm_token(in);
        const int height = read_pgm_token(in);
        const int maxval = read_pgm_token(in);
        return width > 0 && height > 0 && maxval == 255;
    } catch (const ParseError&) {
        return false;
    }
}

Tensor preprocess(const GrayImage& image, int64_t target_h, int64_t target_w,
                  int64_t patch) {
    if (patch < 1 || target_h % patch != 0 || target_w % patch != 0) {
        throw ContractError("preprocess: target " + std::to_string(target_h) +
                            "x" + std::to_string(target_w) +
                            " not divisible by patch " +
                            std::to_string(patch));
    }
    const double sy = static_cast<double>(target_h) /
                      static_cast<double>(image.height);
    const double sx = static_cast<double>(target_w) /
                      static_cast<double>(image.width);
    const double s = std::min(sy, sx);
    const int64_t fit_h =
        std::max<int64_t>(1, static_cast<int64_t>(image.height * s));
    const int64_t fit_w =
        std::max<int64_t>(1, static_cast<int64_t>(image.width * s));

    Tensor out = Tensor::full({1, target_h, target_w}, 1.0);
    auto od = out.data();
    for (int64_t y = 0; y < fit_h; ++y) {
        // Bilinear sample at the source-space center of each target pixel.
        const double fy = (static_cast<double>(y) + 0.5) *
                              static_cast<double>(image.height) /
                              static_cast<double>(fit_h) -
                          0.5;
        const int64_t y0 = std::clamp<int64_t>(
            static_cast<int64_t>(std::floor(fy)), 0, image.height - 1);
        const int64_t y1 = std::min(y0 + 1, image.height - 1);
        const double wy = std::clamp(fy - static_cast<double>(y0), 0.0, 1.0);
        for (int64_t x = 0; x < fit_w; ++x) {
            const double fx = (static_cast<double>(x) + 0.5) *
                                  static_cast<double>(image.width) /
                                  static_cast<double>(fit_w) -
                              0.5;
            const int64_t x0 = std::clamp<int64_t>(
                static_cast<int64_t>(std::floor(fx)), 0, image.width - 1);
            const int64_t x1 = std::min(x0 + 1, image.width - 1);
            const double wx =
                std::clamp(fx - static_cast<double>(x0), 0.0, 1.0);
            const double top = (1.0 - wx) * image.at(y0, x0) +
                               wx * image.at(y0, x1);
            const double bot = (1.0 - wx) * image.at(y1, x0) +
                               wx * image.at(y1, x1);
            od[y * target_w + x] =
                ((1.0 - wy) * top + wy * bot) / 255.0;
        }
    }
    return out;
}

GrayImage tensor_to_image(const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != 1) {
        throw DimensionError("tensor_to_image: expected [1,H,W]");
    }
    GrayImage img = make_image(t.dim(1), t.dim(2));
    auto td = t.data();
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        const double v = std::clamp(td[i], 0.0, 1.0);
        img.pixels[i] = static_cast<uint8_t>(std::floor(v * 255.0 + 0.5));
    }
    return img;
}

} // namespace vedocr
