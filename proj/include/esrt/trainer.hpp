#pragma once

#include <string>

#include "esrt/checkpoint.hpp"
#include "esrt/dataset.hpp"

namespace esrt {

// Mean absolute error. Subgradient at exact ties is 0.
template <typename T>
Tensor<T> l1_loss(GradTape<T>* tape, const Tensor<T>& pred, const Tensor<T>& target) {
    if (!same_shape(pred, target))
        throw ShapeError("l1_loss " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    return mean_all(tape, abs_val(tape, sub(tape, pred, target)));
}

struct TrainOptions {
    ModelConfig cfg;
    std::string data_root;
    std::string out_dir;
    int64_t epochs = 1;
    // random-crop training has no natural epoch; an "epoch" is a fixed
    // number of sampled batches and the lr schedule counts these
    int64_t steps_per_epoch = 1000;
    int64_t batch = 16;
    int64_t patch = 48;  // LR patch side
    uint64_t seed = 0;
    double lr0 = 2e-4;
    int64_t lr_half_epochs = 200;
    std::string resume;  // checkpoint path, empty for fresh start
    bool quiet = false;
};

struct TrainResult {
    std::string final_checkpoint;
    double first_step_loss = 0;
    double final_epoch_loss = 0;
    double final_val_psnr = 0;
};

TrainResult train(const TrainOptions& opt);

// Full-image SR with a trained model; input in [0,1], output clamped image.
ImageRGB infer_image(const Checkpoint& ck, const ImageRGB& lr);

}  // namespace esrt
