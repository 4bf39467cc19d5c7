#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "esrt/tensor.hpp"

namespace esrt {

// 8-bit interleaved RGB image.
struct ImageRGB {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<uint8_t> pixels;  // height * width * 3, row-major

    ImageRGB() = default;
    ImageRGB(int64_t h, int64_t w) : height(h), width(w), pixels(size_t(h * w * 3), 0) {
        if (h < 1 || w < 1) throw ArgError("image dims must be >= 1");
    }

    uint8_t& at(int64_t y, int64_t x, int64_t c) { return pixels[size_t((y * width + x) * 3 + c)]; }
    uint8_t at(int64_t y, int64_t x, int64_t c) const {
        return pixels[size_t((y * width + x) * 3 + c)];
    }
};

// PNG or PPM (P6), dispatched on the file's magic bytes. Gray/palette/alpha
// PNGs are expanded to 8-bit RGB.
ImageRGB read_image(const std::string& path);

void write_png(const std::string& path, const ImageRGB& img);
void write_ppm(const std::string& path, const ImageRGB& img);

// Planar float tensor in [0,1], shape 3 x H x W.
Tensor<float> image_to_tensor(const ImageRGB& img);

// Inverse: clamp to [0,1], scale to 255 and round. Accepts 3xHxW or 1x3xHxW.
ImageRGB tensor_to_image(const Tensor<float>& t);

}  // namespace esrt
