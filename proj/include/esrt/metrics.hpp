#pragma once

#include "esrt/image.hpp"

namespace esrt {

// BT.601 luma with studio swing, computed on [0,1] inputs:
// Y = 16/255 + (65.481 R + 128.553 G + 24.966 B) / 255.
// Returned as an H*W row-major plane with values in [16/255, 235/255].
std::vector<double> rgb_to_y(const ImageRGB& img);

// PSNR on the Y channel after cropping `shave` pixels from every border.
// Identical inputs give +infinity.
double psnr_y(const ImageRGB& a, const ImageRGB& b, int64_t shave);

// Mean local SSIM on the Y channel: 11x11 Gaussian window (sigma 1.5),
// K1=0.01, K2=0.03, L=1, valid-window filtering, after border shaving.
double ssim_y(const ImageRGB& a, const ImageRGB& b, int64_t shave);

}  // namespace esrt
