#include "esrt/dataset.hpp"

#include <algorithm>
#include <filesystem>

namespace fs = std::filesystem;

namespace esrt {

ImageRGB mod_crop(const ImageRGB& img, int64_t r) {
    if (r < 1) throw ArgError("mod_crop: scale must be >= 1");
    const int64_t h = img.height - img.height % r;
    const int64_t w = img.width - img.width % r;
    if (h < 1 || w < 1) throw DataError("image smaller than the scale factor");
    if (h == img.height && w == img.width) return img;
    ImageRGB out(h, w);
    for (int64_t y = 0; y < h; ++y)
        std::copy_n(img.pixels.data() + size_t(y * img.width * 3), size_t(w * 3),
                    out.pixels.data() + size_t(y * w * 3));
    return out;
}

SrPair make_pair(ImageRGB hr, int64_t scale, std::string stem) {
    SrPair p;
    p.hr = mod_crop(hr, scale);
    p.lr = bicubic_resize(p.hr, p.hr.height / scale, p.hr.width / scale, /*antialias=*/true);
    p.scale = scale;
    p.stem = std::move(stem);
    return p;
}

namespace {

bool is_image_file(const fs::path& p) {
    const std::string ext = p.extension().string();
    return ext == ".png" || ext == ".PNG" || ext == ".ppm" || ext == ".PPM";
}

}  // namespace

Dataset::Dataset(const std::string& root, int64_t scale) : root_(root) {
    const fs::path hr_dir = fs::path(root) / "HR";
    if (!fs::is_directory(hr_dir))
        throw DataError("dataset root has no HR/ directory: " + root);

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(hr_dir))
        if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .png/.ppm images under " + hr_dir.string());

    const fs::path lr_dir = fs::path(root) / ("LR_x" + std::to_string(scale));
    for (const auto& f : files) {
        const std::string stem = f.stem().string();
        ImageRGB hr = read_image(f.string());

        fs::path lr_path;
        for (const char* ext : {".png", ".ppm"}) {
            fs::path candidate = lr_dir / (stem + ext);
            if (fs::exists(candidate)) {
                lr_path = candidate;
                break;
            }
        }

        if (!lr_path.empty()) {
            SrPair p;
            p.hr = mod_crop(hr, scale);
            p.lr = read_image(lr_path.string());
            p.scale = scale;
            p.stem = stem;
            if (p.lr.height * scale != p.hr.height || p.lr.width * scale != p.hr.width)
                throw DataError("LR/HR size mismatch for " + stem);
            pairs_.push_back(std::move(p));
        } else {
            pairs_.push_back(make_pair(std::move(hr), scale, stem));
        }
    }
}

namespace {

// dihedral transforms applied patch-wise; flip and rot act on square patches
void copy_patch(const ImageRGB& src, int64_t oy, int64_t ox, int64_t p, bool hflip, bool rot90,
                float* dst /* 3 x p x p planar */) {
    for (int64_t y = 0; y < p; ++y)
        for (int64_t x = 0; x < p; ++x) {
            int64_t ty = y, tx = x;
            if (rot90) {  // output(y,x) <- input(p-1-x, y), a 90-degree turn
                ty = p - 1 - x;
                tx = y;
            }
            if (hflip) tx = p - 1 - tx;
            for (int64_t c = 0; c < 3; ++c)
                dst[(c * p + y) * p + x] = float(src.at(oy + ty, ox + tx, c)) / 255.0f;
        }
}

}  // namespace

PatchBatch sample_patches(const SrPair& pair, int64_t patch, int64_t count, Rng& rng,
                          bool augment) {
    if (count < 1) throw ArgError("sample_patches: count must be >= 1");
    if (pair.lr.height < patch || pair.lr.width < patch)
        throw ArgError("image " + pair.stem + " smaller than the " + std::to_string(patch) +
                       "px patch");
    const int64_t r = pair.scale;
    PatchBatch batch{Tensor<float>(Shape{count, 3, patch, patch}),
                     Tensor<float>(Shape{count, 3, patch * r, patch * r})};
    for (int64_t i = 0; i < count; ++i) {
        const int64_t oy = rng.below(pair.lr.height - patch + 1);
        const int64_t ox = rng.below(pair.lr.width - patch + 1);
        const bool hflip = augment && rng.coin();
        const bool rot90 = augment && rng.coin();
        copy_patch(pair.lr, oy, ox, patch, hflip, rot90,
                   batch.lr.data() + i * 3 * patch * patch);
        copy_patch(pair.hr, oy * r, ox * r, patch * r, hflip, rot90,
                   batch.hr.data() + i * 3 * patch * r * patch * r);
    }
    return batch;
}

}  // namespace esrt
