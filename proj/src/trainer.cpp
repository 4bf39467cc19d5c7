#include "esrt/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "esrt/metrics.hpp"

namespace fs = std::filesystem;

namespace esrt {

namespace {

// Per-epoch validation runs on a bounded center crop of the first image so
// the cost stays flat regardless of dataset resolution.
double validation_psnr(const Checkpoint& ck, const SrPair& pair) {
    const int64_t max_side = 96;
    const int64_t h = std::min(pair.lr.height, max_side);
    const int64_t w = std::min(pair.lr.width, max_side);
    const int64_t oy = (pair.lr.height - h) / 2;
    const int64_t ox = (pair.lr.width - w) / 2;
    const int64_t r = pair.scale;

    ImageRGB lr_crop(h, w), hr_crop(h * r, w * r);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c) lr_crop.at(y, x, c) = pair.lr.at(oy + y, ox + x, c);
    for (int64_t y = 0; y < h * r; ++y)
        for (int64_t x = 0; x < w * r; ++x)
            for (int64_t c = 0; c < 3; ++c)
                hr_crop.at(y, x, c) = pair.hr.at(oy * r + y, ox * r + x, c);

    ImageRGB sr = infer_image(ck, lr_crop);
    return psnr_y(sr, hr_crop, r);
}

std::string ckpt_name(int64_t epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "esrt_e%04lld.ckpt", (long long)epoch);
    return buf;
}

}  // namespace

ImageRGB infer_image(const Checkpoint& ck, const ImageRGB& lr) {
    Tensor<float> x = image_to_tensor(lr);
    x = x.reshaped(Shape{1, 3, lr.height, lr.width});
    Tensor<float> y = esrt_forward<float>(nullptr, x, ck.params, ck.cfg);
    return tensor_to_image(y);
}

TrainResult train(const TrainOptions& opt) {
    opt.cfg.validate();
    if (opt.epochs < 1 || opt.steps_per_epoch < 1 || opt.batch < 1 || opt.patch < 1)
        throw ArgError("train: epochs, steps, batch and patch must be >= 1");
    if (opt.out_dir.empty()) throw ArgError("train: output directory required");

    Dataset data(opt.data_root, opt.cfg.scale);
    fs::create_directories(opt.out_dir);

    Checkpoint ck;
    Rng rng(opt.seed);
    int64_t start_epoch = 1;
    if (!opt.resume.empty()) {
        ck = load_checkpoint(opt.resume);
        rng.set_state_hex(ck.rng_state_hex);
        start_epoch = ck.epoch + 1;
    } else {
        ck.cfg = opt.cfg;
        ck.params = init_params(opt.cfg, opt.seed);
        ck.adam.init(ck.params);
        ck.lr0 = opt.lr0;
        ck.lr_half_epochs = opt.lr_half_epochs;
    }

    const std::string csv_path = (fs::path(opt.out_dir) / "metrics.csv").string();
    std::ofstream csv(csv_path, start_epoch == 1 ? std::ios::trunc : std::ios::app);
    if (!csv) throw IoError("cannot write " + csv_path);
    if (start_epoch == 1) csv << "epoch,loss,val_psnr,lr\n";

    TrainResult result;
    for (int64_t epoch = start_epoch; epoch < start_epoch + opt.epochs; ++epoch) {
        const double lr = lr_at_epoch(ck.lr0, epoch, ck.lr_half_epochs);
        double loss_sum = 0;
        for (int64_t step = 0; step < opt.steps_per_epoch; ++step) {
            const SrPair& pair = data.pair(size_t(rng.below(int64_t(data.size()))));
            PatchBatch batch = sample_patches(pair, opt.patch, opt.batch, rng, true);

            GradTape<float> tape;
            ck.params.watch_all(tape);
            Tensor<float> pred = esrt_forward(&tape, batch.lr, ck.params, ck.cfg);
            Tensor<float> loss = l1_loss(&tape, pred, batch.hr);
            auto grads = tape.backward(loss);
            adam_step(ck.params, grads, ck.adam, lr);

            const double lv = double(loss.item());
            loss_sum += lv;
            if (epoch == start_epoch && step == 0) result.first_step_loss = lv;
        }
        const double mean_loss = loss_sum / double(opt.steps_per_epoch);

        ck.epoch = epoch;
        ck.rng_state_hex = rng.state_hex();
        const double val = validation_psnr(ck, data.pair(0));
        csv << epoch << "," << mean_loss << "," << val << "," << lr << "\n";
        csv.flush();
        if (!opt.quiet)
            std::printf("epoch %lld  loss %.6f  val_psnr %.3f  lr %.3g\n", (long long)epoch,
                        mean_loss, val, lr);

        result.final_checkpoint = (fs::path(opt.out_dir) / ckpt_name(epoch)).string();
        save_checkpoint(result.final_checkpoint, ck);
        result.final_epoch_loss = mean_loss;
        result.final_val_psnr = val;
    }
    return result;
}

}  // namespace esrt
