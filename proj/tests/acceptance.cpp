// Acceptance suite: ten numbered criteria, one pass/fail line each.
// Run with no arguments for all criteria, or `--criterion N` for one.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "emha_oracle.hpp"
#include "esrt/cost.hpp"
#include "esrt/eval.hpp"
#include "esrt/gradcheck.hpp"
#include "esrt/metrics.hpp"
#include "esrt/trainer.hpp"

namespace fs = std::filesystem;
using namespace esrt;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string data_dir() {
    if (const char* env = std::getenv("ESRT_DATA_DIR")) return env;
#ifdef ESRT_SOURCE_DIR
    return std::string(ESRT_SOURCE_DIR) + "/data";
#else
    return "data";
#endif
}

fs::path work_dir() {
    fs::path dir = fs::temp_directory_path() / "esrt_acceptance";
    fs::create_directories(dir);
    return dir;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
    double m = 0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// ---- criterion 1: EMHA == block-diagonal-masked full attention -------------
Outcome c1_emha_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0;
    for (int64_t n : {16, 32})
        for (int64_t m : {2, 8})
            for (int64_t s : {1, 2, 4}) {
                ParamStore<double> ps =
                    detail::mini_et_params(uint64_t(811 + n * 100 + m * 10 + s), 32, 16, 2, false);
                Rng rng(uint64_t(n * 31 + m * 7 + s));
                Tensor<double> x = detail::random_input(rng, {2, 32, n});
                Tensor<double> got = emha(static_cast<GradTape<double>*>(nullptr), x, ps, "et0", s, m);
                Tensor<double> want = esrt_test::emha_masked_oracle(x, ps, "et0", s, m);
                worst = std::max(worst, max_abs_diff(got, want));
            }
    const double dt = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "max abs err %.3e (tol 1e-5) over N{16,32} m{2,8} s{1,2,4}, %.1fs",
                  worst, dt);
    return {worst < 1e-5 && dt < 10.0, buf};
}

// ---- criterion 2: attention-score memory law --------------------------------
Outcome c2_attention_memory() {
    const int64_t n = 120, m = 8, b = 1;  // divisible by 2, 4 and 6
    const int64_t base = attn_score_memory(n, m, 1, b);
    bool ok = true;
    for (int64_t s : {2, 4, 6}) ok = ok && attn_score_memory(n, m, s, b) * s == base;
    // consistent with the published decreasing memory column (6731M -> 4191M -> 3159M)
    int64_t prev = attn_score_memory(n, m, 2, b);
    for (int64_t s : {4, 6}) {
        const int64_t e = attn_score_memory(n, m, s, b);
        ok = ok && e < prev;
        prev = e;
    }
    return {ok, "elems(s)/elems(1) == 1/s exactly for s in {2,4,6}; decreasing in s "
                "(absolute MB figures are framework overhead, out of scope)"};
}

// ---- criterion 3: gradient suite --------------------------------------------
Outcome c3_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    for (const auto& block : gradcheck_blocks()) {
        GradCheckReport rep = gradcheck_block(block, 2024, 2);
        char buf[120];
        std::snprintf(buf, sizeof(buf), "%s %.2e%s ", rep.block.c_str(), rep.max_rel_err,
                      rep.pass ? "" : ("(FAIL at " + rep.worst + ")").c_str());
        detail += buf;
        ok = ok && rep.pass;
    }
    const double dt = seconds_since(t0);
    detail += "in " + std::to_string(dt) + "s";
    return {ok && dt < 120.0, detail};
}

// ---- criterion 4: HFM exactness ---------------------------------------------
Outcome c4_hfm() {
    Rng rng(4);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t c = 1 + rng.below(4);
        const int64_t h = 2 * (1 + rng.below(8));
        const int64_t w = 2 * (1 + rng.below(8));
        Tensor<float> x(Shape{1, c, h, w});
        for (int64_t i = 0; i < x.size(); ++i) x[i] = float(rng.uniform(-3, 3));
        Tensor<float> p = hfm<float>(nullptr, x, 2);
        Tensor<float> t_u = upsample_nearest<float>(nullptr, avg_pool2d<float>(nullptr, x, 2), 2);
        for (int64_t i = 0; i < x.size(); ++i)
            worst = std::max(worst, double(std::fabs(t_u[i] + p[i] - x[i])));
    }
    // constants produce exactly zero high-frequency content
    Tensor<float> c = Tensor<float>::full({2, 3, 6, 6}, 1.37f);
    Tensor<float> pc = hfm<float>(nullptr, c, 2);
    double cworst = 0;
    for (int64_t i = 0; i < pc.size(); ++i) cworst = std::max(cworst, double(std::fabs(pc[i])));
    char buf[120];
    std::snprintf(buf, sizeof(buf), "T_U + P_high - T_L max %.2e over 100 inputs; const residual %.1e",
                  worst, cworst);
    return {worst < 1e-6 && cworst == 0.0, buf};
}

// ---- criterion 5: fold/unfold identity --------------------------------------
Outcome c5_fold_unfold() {
    Rng rng(5);
    double worst = 0;
    for (int64_t k : {1, 3, 5}) {
        for (Shape shape : {Shape{1, 1, 4, 4}, Shape{1, 3, 5, 7}, Shape{2, 8, 13, 17}}) {
            Tensor<float> x(shape);
            for (int64_t i = 0; i < x.size(); ++i) x[i] = float(rng.uniform(-2, 2));
            Tensor<float> rt =
                fold<float>(nullptr, unfold<float>(nullptr, x, k), k, shape[2], shape[3]);
            for (int64_t i = 0; i < x.size(); ++i)
                worst = std::max(worst, double(std::fabs(rt[i] - x[i])));
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max round-trip err %.2e for k in {1,3,5} up to 2x8x13x17", worst);
    return {worst < 1e-6, buf};
}

// ---- criterion 6: bicubic baseline on Set5 -----------------------------------
Outcome c6_bicubic_set5() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string root = data_dir() + "/Set5";
    if (!fs::is_directory(fs::path(root) / "HR")) {
        return {false,
                "Set5 not found at " + root + "/HR (set ESRT_DATA_DIR to a directory containing "
                "Set5/HR/*.png); dataset is not bundled and this sandbox has no network access"};
    }
    EvalResult x2 = evaluate_dataset(root, 2, EvalMethod::Bicubic, nullptr, 2);
    EvalResult x4 = evaluate_dataset(root, 4, EvalMethod::Bicubic, nullptr, 4);
    const double dt = seconds_since(t0);
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "x2 psnr %.3f (want 33.66+-0.35) ssim %.4f (want 0.9299+-0.005); x4 psnr %.3f "
                  "(want 28.42+-0.35); %.1fs",
                  x2.mean_psnr, x2.mean_ssim, x4.mean_psnr, dt);
    const bool ok = std::fabs(x2.mean_psnr - 33.66) <= 0.35 &&
                    std::fabs(x2.mean_ssim - 0.9299) <= 0.005 &&
                    std::fabs(x4.mean_psnr - 28.42) <= 0.35 && dt < 60.0;
    return {ok, buf};
}

// ---- criterion 7: parameter accounting ---------------------------------------
Outcome c7_params() {
    ModelConfig cfg;
    cfg.scale = 4;
    CostReport rep = cost_report(cfg, 1280, 720);
    const int64_t from_store = count_params(init_params(cfg, 0));
    std::string itemized;
    for (const auto& [what, np] : rep.param_delta_sources)
        itemized += what + "=" + std::to_string(np) + " ";
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "params(r=4) = %lld, band [600000, 900000] around published 751K; deltas: %s",
                  (long long)rep.params_total, itemized.c_str());
    const bool ok =
        rep.params_total >= 600000 && rep.params_total <= 900000 && rep.params_total == from_store;
    return {ok, buf};
}

// Deterministic synthetic photo-like test card: smooth gradients, solid
// shapes, sinusoid texture and thin lines.
ImageRGB synthetic_image(uint64_t seed, int64_t side) {
    Rng rng(seed);
    ImageRGB img(side, side);
    const double fx = rng.uniform(0.05, 0.12), fy = rng.uniform(0.05, 0.12);
    for (int64_t y = 0; y < side; ++y)
        for (int64_t x = 0; x < side; ++x) {
            const double g = 0.35 + 0.3 * double(x) / double(side) + 0.2 * double(y) / double(side);
            const double tex = 0.12 * std::sin(fx * double(x)) * std::cos(fy * double(y));
            img.at(y, x, 0) = uint8_t(std::lround(std::clamp(g + tex, 0.0, 1.0) * 255));
            img.at(y, x, 1) = uint8_t(std::lround(std::clamp(0.9 - g + tex, 0.0, 1.0) * 255));
            img.at(y, x, 2) = uint8_t(std::lround(std::clamp(0.5 + tex * 2.0, 0.0, 1.0) * 255));
        }
    for (int shape = 0; shape < 24; ++shape) {
        const int64_t sy = rng.below(side - 16), sx = rng.below(side - 16);
        const int64_t h = 4 + rng.below(28), w = 4 + rng.below(28);
        const uint8_t col[3] = {uint8_t(rng.below(256)), uint8_t(rng.below(256)),
                                uint8_t(rng.below(256))};
        for (int64_t y = sy; y < std::min(side, sy + h); ++y)
            for (int64_t x = sx; x < std::min(side, sx + w); ++x)
                for (int64_t c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
    }
    for (int line = 0; line < 12; ++line) {
        const int64_t pos = rng.below(side);
        const uint8_t v = uint8_t(rng.below(256));
        const bool horiz = rng.coin();
        for (int64_t t = 0; t < side; ++t)
            for (int64_t c = 0; c < 3; ++c)
                (horiz ? img.at(pos, t, c) : img.at(t, pos, c)) = v;
    }
    return img;
}

// ---- criterion 8: single-image overfit beats bicubic -------------------------
Outcome c8_overfit() {
    const auto t0 = std::chrono::steady_clock::now();
    fs::path dir = work_dir() / "overfit";
    fs::remove_all(dir);
    fs::create_directories(dir / "HR");
    ImageRGB hr = synthetic_image(88, 192);
    write_png((dir / "HR" / "card.png").string(), hr);

    TrainOptions opt;
    opt.cfg.scale = 2;
    opt.data_root = dir.string();
    opt.out_dir = (dir / "out").string();
    opt.epochs = 5;
    opt.steps_per_epoch = 100;  // 500 steps total
    opt.batch = 4;
    opt.patch = 24;
    opt.seed = 7;
    opt.lr0 = 1e-3;
    opt.quiet = true;
    TrainResult res = train(opt);

    Checkpoint ck = load_checkpoint(res.final_checkpoint);
    Dataset data(dir.string(), 2);
    const SrPair& pair = data.pair(0);
    ImageRGB sr = infer_image(ck, pair.lr);
    ImageRGB bi = bicubic_resize(pair.lr, pair.hr.height, pair.hr.width);
    const double psnr_model = psnr_y(sr, pair.hr, 2);
    const double psnr_bi = psnr_y(bi, pair.hr, 2);
    const double dt = seconds_since(t0);

    char buf[240];
    std::snprintf(buf, sizeof(buf),
                  "loss %.4f -> %.4f (ratio %.2f, need <= 0.20); psnr model %.2f vs bicubic %.2f "
                  "(need +1.0 dB); %.0fs (budget 900)",
                  res.first_step_loss, res.final_epoch_loss,
                  res.final_epoch_loss / res.first_step_loss, psnr_model, psnr_bi, dt);
    const bool ok = res.final_epoch_loss <= 0.2 * res.first_step_loss &&
                    psnr_model >= psnr_bi + 1.0 && dt < 900.0;
    return {ok, buf};
}

// ---- criterion 9: shape contract ----------------------------------------------
Outcome c9_shapes() {
    for (int64_t r : {2, 3, 4}) {
        ModelConfig cfg;
        cfg.scale = r;
        ParamStore<float> ps = init_params(cfg, uint64_t(90 + r));
        for (int64_t h : {17, 24, 48})
            for (int64_t w : {17, 24, 48}) {
                Rng rng(uint64_t(r * 1000 + h * 10 + w));
                Tensor<float> x(Shape{1, 3, h, w});
                for (int64_t i = 0; i < x.size(); ++i) x[i] = float(rng.uniform(0, 1));
                Tensor<float> y = esrt_forward<float>(nullptr, x, ps, cfg);
                if (y.shape() != Shape{1, 3, r * h, r * w})
                    return {false, "wrong shape at r=" + std::to_string(r) + " " +
                                       std::to_string(h) + "x" + std::to_string(w) + ": " +
                                       shape_str(y.shape())};
                if (!y.all_finite())
                    return {false, "non-finite output at r=" + std::to_string(r)};
            }
    }
    return {true, "output exactly 3 x rH x rW and finite for r in {2,3,4}, H,W in {17,24,48}"};
}

// ---- criterion 10: determinism --------------------------------------------------
Outcome c10_determinism() {
    fs::path dir = work_dir() / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir / "HR");
    write_png((dir / "HR" / "card.png").string(), synthetic_image(10, 64));

    TrainOptions opt;
    opt.cfg.scale = 2;
    opt.data_root = dir.string();
    opt.epochs = 2;
    opt.steps_per_epoch = 2;
    opt.batch = 2;
    opt.patch = 16;
    opt.seed = 31;
    opt.quiet = true;

    auto bytes = [](const std::string& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    };

    opt.out_dir = (dir / "run1").string();
    TrainResult r1 = train(opt);
    opt.out_dir = (dir / "run2").string();
    TrainResult r2 = train(opt);
    const bool identical = bytes(r1.final_checkpoint) == bytes(r2.final_checkpoint);

    Checkpoint ck = load_checkpoint(r1.final_checkpoint);
    const std::string resaved = (dir / "resaved.ckpt").string();
    save_checkpoint(resaved, ck);
    const bool roundtrip = bytes(r1.final_checkpoint) == bytes(resaved);

    return {identical && roundtrip,
            identical ? (roundtrip ? "two same-seed runs bit-identical; save/load/save bit-exact"
                                   : "round-trip bytes differ")
                      : "same-seed checkpoints differ"};
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    std::string data_override;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
        else if (std::strcmp(argv[i], "--data-dir") == 0 && i + 1 < argc) {
            setenv("ESRT_DATA_DIR", argv[++i], 1);
        } else {
            std::fprintf(stderr, "usage: %s [--criterion N] [--data-dir DIR]\n", argv[0]);
            return 2;
        }
    }

    struct Criterion {
        int num;
        const char* what;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> criteria{
        {1, "EMHA matches block-diagonal-masked full attention", c1_emha_oracle},
        {2, "attention-score memory follows the 1/s law", c2_attention_memory},
        {3, "finite-difference gradient suite", c3_gradients},
        {4, "HFM decomposition is exact", c4_hfm},
        {5, "fold/unfold identity", c5_fold_unfold},
        {6, "bicubic Set5 baseline reproduction", c6_bicubic_set5},
        {7, "parameter count within the published band", c7_params},
        {8, "single-image overfit beats bicubic by 1 dB", c8_overfit},
        {9, "output shape contract", c9_shapes},
        {10, "training determinism and checkpoint round-trip", c10_determinism},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (only != 0 && c.num != only) continue;
        Outcome out;
        try {
            out = c.fn();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] criterion %d: %s — %s\n", out.pass ? "PASS" : "FAIL", c.num, c.what,
                    out.detail.c_str());
        std::fflush(stdout);
        if (!out.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
