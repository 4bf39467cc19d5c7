#include "esrt/metrics.hpp"

#include <cmath>
#include <limits>

namespace esrt {

namespace {

std::vector<double> shaved_y(const ImageRGB& img, int64_t shave, int64_t& h, int64_t& w) {
    if (shave < 0) throw ArgError("shave must be >= 0");
    h = img.height - 2 * shave;
    w = img.width - 2 * shave;
    if (h < 1 || w < 1) throw ShapeError("image too small for shave " + std::to_string(shave));
    std::vector<double> y(size_t(h * w));
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
            const int64_t sy = i + shave, sx = j + shave;
            const double r = img.at(sy, sx, 0) / 255.0;
            const double g = img.at(sy, sx, 1) / 255.0;
            const double b = img.at(sy, sx, 2) / 255.0;
            y[size_t(i * w + j)] = 16.0 / 255.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
        }
    return y;
}

}  // namespace

std::vector<double> rgb_to_y(const ImageRGB& img) {
    int64_t h = 0, w = 0;
    return shaved_y(img, 0, h, w);
}

double psnr_y(const ImageRGB& a, const ImageRGB& b, int64_t shave) {
    if (a.height != b.height || a.width != b.width)
        throw ShapeError("psnr_y: image dims differ");
    int64_t h = 0, w = 0;
    const std::vector<double> ya = shaved_y(a, shave, h, w);
    const std::vector<double> yb = shaved_y(b, shave, h, w);
    double mse = 0.0;
    for (size_t i = 0; i < ya.size(); ++i) {
        const double d = ya[i] - yb[i];
        mse += d * d;
    }
    mse /= double(ya.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim_y(const ImageRGB& a, const ImageRGB& b, int64_t shave) {
    if (a.height != b.height || a.width != b.width)
        throw ShapeError("ssim_y: image dims differ");
    int64_t h = 0, w = 0;
    const std::vector<double> ya = shaved_y(a, shave, h, w);
    const std::vector<double> yb = shaved_y(b, shave, h, w);

    constexpr int64_t win = 11;
    constexpr double sigma = 1.5;
    constexpr double c1 = 0.01 * 0.01;  // (K1*L)^2 with L=1
    constexpr double c2 = 0.03 * 0.03;
    if (h < win || w < win) throw ArgError("ssim_y: image smaller than the 11x11 window");

    double kernel[win];
    double ksum = 0.0;
    for (int64_t i = 0; i < win; ++i) {
        const double d = double(i) - double(win - 1) / 2.0;
        kernel[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        ksum += kernel[i];
    }
    for (double& k : kernel) k /= ksum;

    // separable Gaussian filter, valid region only
    const int64_t fh = h - win + 1, fw = w - win + 1;
    auto filter = [&](const std::vector<double>& src) {
        std::vector<double> tmp(size_t(fh * w), 0.0);
        for (int64_t y = 0; y < fh; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int64_t k = 0; k < win; ++k) acc += kernel[k] * src[size_t((y + k) * w + x)];
                tmp[size_t(y * w + x)] = acc;
            }
        std::vector<double> out(size_t(fh * fw), 0.0);
        for (int64_t y = 0; y < fh; ++y)
            for (int64_t x = 0; x < fw; ++x) {
                double acc = 0.0;
                for (int64_t k = 0; k < win; ++k) acc += kernel[k] * tmp[size_t(y * w + x + k)];
                out[size_t(y * fw + x)] = acc;
            }
        return out;
    };

    const size_t n = ya.size();
    std::vector<double> aa(n), bb(n), ab(n);
    for (size_t i = 0; i < n; ++i) {
        aa[i] = ya[i] * ya[i];
        bb[i] = yb[i] * yb[i];
        ab[i] = ya[i] * yb[i];
    }
    const std::vector<double> mu_a = filter(ya);
    const std::vector<double> mu_b = filter(yb);
    const std::vector<double> s_aa = filter(aa);
    const std::vector<double> s_bb = filter(bb);
    const std::vector<double> s_ab = filter(ab);

    double total = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = s_aa[i] - ma * ma;
        const double vb = s_bb[i] - mb * mb;
        const double cov = s_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return total / double(mu_a.size());
}

}  // namespace esrt
