#include "esrt/eval.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "esrt/metrics.hpp"
#include "esrt/trainer.hpp"

namespace esrt {

EvalResult evaluate_dataset(const std::string& root, int64_t scale, EvalMethod method,
                            const Checkpoint* ck, int64_t shave, int threads) {
    if (method == EvalMethod::Model && !ck) throw ArgError("model evaluation needs a checkpoint");
    Dataset data(root, scale);

    EvalResult res;
    res.per_image.resize(data.size());

    auto eval_one = [&](size_t i) {
        const SrPair& pair = data.pair(i);
        ImageRGB sr;
        switch (method) {
            case EvalMethod::Bicubic:
                sr = bicubic_resize(pair.lr, pair.hr.height, pair.hr.width);
                break;
            case EvalMethod::Identity:
                sr = pair.hr;
                break;
            case EvalMethod::Model:
                sr = infer_image(*ck, pair.lr);
                break;
        }
        res.per_image[i] = {pair.stem, psnr_y(sr, pair.hr, shave), ssim_y(sr, pair.hr, shave)};
    };

    if (threads <= 1 || data.size() < 2) {
        for (size_t i = 0; i < data.size(); ++i) eval_one(i);
    } else {
        std::atomic<size_t> next{0};
        auto worker = [&] {
            for (size_t i = next.fetch_add(1); i < data.size(); i = next.fetch_add(1)) eval_one(i);
        };
        std::vector<std::thread> pool;
        const size_t n = std::min<size_t>(size_t(threads), data.size());
        for (size_t t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    double sp = 0, ss = 0;
    for (const auto& e : res.per_image) {
        sp += e.psnr;
        ss += e.ssim;
    }
    res.mean_psnr = sp / double(res.per_image.size());
    res.mean_ssim = ss / double(res.per_image.size());
    return res;
}

}  // namespace esrt
