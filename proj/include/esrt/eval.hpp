#pragma once

#include <optional>
#include <string>
#include <vector>

#include "esrt/checkpoint.hpp"
#include "esrt/dataset.hpp"

namespace esrt {

enum class EvalMethod { Bicubic, Identity, Model };

struct EvalEntry {
    std::string name;
    double psnr = 0;
    double ssim = 0;
};

struct EvalResult {
    std::vector<EvalEntry> per_image;
    double mean_psnr = 0;
    double mean_ssim = 0;
};

// PSNR/SSIM on the Y channel over a dataset directory. `threads` > 1
// processes images concurrently (each image pipeline is independent);
// results are ordered by file stem either way.
EvalResult evaluate_dataset(const std::string& root, int64_t scale, EvalMethod method,
                            const Checkpoint* ck, int64_t shave, int threads = 1);

}  // namespace esrt
