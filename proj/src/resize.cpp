#include "esrt/resize.hpp"

#include <cmath>

namespace esrt {

namespace {

double cubic(double x) {
    // Keys kernel, a = -0.5
    const double ax = std::fabs(x);
    if (ax <= 1.0) return (1.5 * ax - 2.5) * ax * ax + 1.0;
    if (ax < 2.0) return ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0;
    return 0.0;
}

struct AxisWeights {
    int64_t taps = 0;
    std::vector<int64_t> idx;  // out * taps, clamped source indices
    std::vector<double> w;     // out * taps, normalized
};

AxisWeights make_weights(int64_t in_len, int64_t out_len, bool antialias) {
    const double scale = double(out_len) / double(in_len);
    const bool shrink = antialias && scale < 1.0;
    const double kscale = shrink ? scale : 1.0;
    const double width = 4.0 / kscale;

    AxisWeights aw;
    aw.taps = int64_t(std::ceil(width)) + 2;
    aw.idx.resize(size_t(out_len * aw.taps));
    aw.w.resize(size_t(out_len * aw.taps));

    for (int64_t i = 0; i < out_len; ++i) {
        const double u = (double(i) + 0.5) / scale - 0.5;  // source center, 0-based
        const int64_t left = int64_t(std::floor(u - width / 2.0));
        double sum = 0.0;
        for (int64_t p = 0; p < aw.taps; ++p) {
            const int64_t j = left + p;
            const double wv = kscale * cubic(kscale * (u - double(j)));
            aw.w[size_t(i * aw.taps + p)] = wv;
            aw.idx[size_t(i * aw.taps + p)] = std::min(std::max<int64_t>(j, 0), in_len - 1);
            sum += wv;
        }
        for (int64_t p = 0; p < aw.taps; ++p) aw.w[size_t(i * aw.taps + p)] /= sum;
    }
    return aw;
}

}  // namespace

std::vector<double> bicubic_resize_plane(const std::vector<double>& src, int64_t h, int64_t w,
                                         int64_t out_h, int64_t out_w, bool antialias) {
    if (h < 1 || w < 1 || int64_t(src.size()) != h * w)
        throw ArgError("bicubic_resize_plane: bad input size");
    if (out_h < 1 || out_w < 1) throw ArgError("bicubic_resize_plane: output dims must be >= 1");

    const AxisWeights ay = make_weights(h, out_h, antialias);
    const AxisWeights ax = make_weights(w, out_w, antialias);

    // rows (vertical) first, then columns
    std::vector<double> tmp(size_t(out_h * w), 0.0);
    for (int64_t oy = 0; oy < out_h; ++oy)
        for (int64_t p = 0; p < ay.taps; ++p) {
            const double wv = ay.w[size_t(oy * ay.taps + p)];
            if (wv == 0.0) continue;
            const double* srow = src.data() + ay.idx[size_t(oy * ay.taps + p)] * w;
            double* drow = tmp.data() + oy * w;
            for (int64_t x = 0; x < w; ++x) drow[x] += wv * srow[x];
        }

    std::vector<double> out(size_t(out_h * out_w), 0.0);
    for (int64_t oy = 0; oy < out_h; ++oy) {
        const double* srow = tmp.data() + oy * w;
        double* drow = out.data() + oy * out_w;
        for (int64_t ox = 0; ox < out_w; ++ox) {
            double acc = 0.0;
            for (int64_t p = 0; p < ax.taps; ++p)
                acc += ax.w[size_t(ox * ax.taps + p)] * srow[ax.idx[size_t(ox * ax.taps + p)]];
            drow[ox] = acc;
        }
    }
    return out;
}

ImageRGB bicubic_resize(const ImageRGB& img, int64_t out_h, int64_t out_w, bool antialias) {
    if (out_h < 1 || out_w < 1) throw ArgError("bicubic_resize: output dims must be >= 1");
    const int64_t h = img.height, w = img.width;
    ImageRGB out(out_h, out_w);
    std::vector<double> plane(size_t(h * w));
    for (int64_t c = 0; c < 3; ++c) {
        for (int64_t i = 0; i < h * w; ++i) plane[size_t(i)] = double(img.pixels[size_t(i * 3 + c)]);
        std::vector<double> res = bicubic_resize_plane(plane, h, w, out_h, out_w, antialias);
        for (int64_t i = 0; i < out_h * out_w; ++i) {
            double v = std::round(res[size_t(i)]);
            v = v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v);
            out.pixels[size_t(i * 3 + c)] = uint8_t(v);
        }
    }
    return out;
}

}  // namespace esrt
