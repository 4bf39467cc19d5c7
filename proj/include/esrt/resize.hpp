#pragma once

#include "esrt/image.hpp"

namespace esrt {

// Bicubic resampling following the MATLAB imresize convention, which is what
// published SR benchmark numbers assume: cubic kernel with a = -0.5,
// replicated borders, weights normalized per output sample, and the kernel
// widened by the scale factor when shrinking (antialias).
ImageRGB bicubic_resize(const ImageRGB& img, int64_t out_h, int64_t out_w, bool antialias = true);

// Single-plane double-precision core, exposed for tests.
std::vector<double> bicubic_resize_plane(const std::vector<double>& src, int64_t h, int64_t w,
                                         int64_t out_h, int64_t out_w, bool antialias);

}  // namespace esrt
