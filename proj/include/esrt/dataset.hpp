#pragma once

#include <string>
#include <vector>

#include "esrt/image.hpp"
#include "esrt/resize.hpp"
#include "esrt/rng.hpp"

namespace esrt {

// Aligned HR/LR pair. HR is mod-cropped to a multiple of the scale so
// lr dims * r == hr dims exactly.
struct SrPair {
    ImageRGB hr;
    ImageRGB lr;
    int64_t scale = 1;
    std::string stem;
};

// Crop HR dims down to the nearest multiple of r (top-left anchored).
ImageRGB mod_crop(const ImageRGB& img, int64_t r);

// Build a pair from an HR image, synthesizing LR with antialiased bicubic.
SrPair make_pair(ImageRGB hr, int64_t scale, std::string stem);

// Dataset rooted at `<root>/HR/*.png|ppm`, with optional pre-degraded
// `<root>/LR_x{r}/` images matched by file stem. Images load eagerly.
class Dataset {
public:
    Dataset(const std::string& root, int64_t scale);

    size_t size() const { return pairs_.size(); }
    const SrPair& pair(size_t i) const { return pairs_.at(i); }
    const std::string& root() const { return root_; }

private:
    std::string root_;
    std::vector<SrPair> pairs_;
};

struct PatchBatch {
    Tensor<float> lr;  // count x 3 x p x p
    Tensor<float> hr;  // count x 3 x rp x rp
};

// Random aligned LR/HR patch pairs with horizontal-flip and 90-degree
// rotation augmentation applied identically to both sides.
PatchBatch sample_patches(const SrPair& pair, int64_t patch, int64_t count, Rng& rng,
                          bool augment = true);

}  // namespace esrt
