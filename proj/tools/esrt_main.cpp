#include <algorithm>
#include <chrono>
#include <functional>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "esrt/cliconfig.hpp"
#include "esrt/cost.hpp"
#include "esrt/eval.hpp"
#include "esrt/gradcheck.hpp"
#include "esrt/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

struct ModelFlags {
    int64_t channels = 32, n_hpb = 3, n_et = 1, pool_k = 2, unfold_k = 3, split_s = 4, heads = 8,
            mlp_ratio = 2, ca_reduction = 4, shared_reps = 5;

    void attach(CLI::App* cmd) {
        cmd->add_option("--channels", channels, "feature channels");
        cmd->add_option("--n-hpb", n_hpb, "number of high preserving blocks");
        cmd->add_option("--n-et", n_et, "number of Transformer encoders");
        cmd->add_option("--pool-k", pool_k, "HFM pooling kernel");
        cmd->add_option("--unfold-k", unfold_k, "patch kernel for the Transformer");
        cmd->add_option("--split-s", split_s, "attention splitting factor");
        cmd->add_option("--heads", heads, "attention heads");
        cmd->add_option("--mlp-ratio", mlp_ratio, "ET MLP hidden multiplier");
        cmd->add_option("--ca-reduction", ca_reduction, "channel attention bottleneck divisor");
        cmd->add_option("--shared-reps", shared_reps, "weight-shared ARFB applications");
    }

    esrt::ModelConfig to_config(int64_t scale) const {
        esrt::ModelConfig cfg;
        cfg.channels = channels;
        cfg.n_hpb = n_hpb;
        cfg.n_et = n_et;
        cfg.pool_k = pool_k;
        cfg.unfold_k = unfold_k;
        cfg.split_s = split_s;
        cfg.heads = heads;
        cfg.mlp_ratio = mlp_ratio;
        cfg.ca_reduction = ca_reduction;
        cfg.hpb_shared_reps = shared_reps;
        cfg.scale = scale;
        cfg.validate();
        return cfg;
    }
};

void echo_config(const esrt::ModelConfig& cfg, uint64_t seed) {
    std::printf(
        "config: channels=%lld n_hpb=%lld n_et=%lld pool_k=%lld unfold_k=%lld split_s=%lld "
        "heads=%lld mlp_ratio=%lld ca_reduction=%lld shared_reps=%lld scale=%lld seed=%llu\n",
        (long long)cfg.channels, (long long)cfg.n_hpb, (long long)cfg.n_et, (long long)cfg.pool_k,
        (long long)cfg.unfold_k, (long long)cfg.split_s, (long long)cfg.heads,
        (long long)cfg.mlp_ratio, (long long)cfg.ca_reduction, (long long)cfg.hpb_shared_reps,
        (long long)cfg.scale, (unsigned long long)seed);
}

int eval_threads() {
    if (const char* env = std::getenv("ESRT_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ESRT: efficient super-resolution Transformer"};
    app.require_subcommand(1);

    // --- train ---
    auto* train = app.add_subcommand("train", "train a model on <root>/HR images");
    std::string train_data, train_out, train_resume;
    int64_t train_scale = 2, train_epochs = 1, train_steps = 1000, train_batch = 16,
            train_patch = 48, train_half = 200;
    uint64_t train_seed = 0;
    double train_lr = 2e-4;
    ModelFlags train_model;
    train->add_option("--data", train_data, "dataset root (expects HR/ subdirectory)")->required();
    train->add_option("--scale", train_scale, "upscaling factor")->check(CLI::IsMember({2, 3, 4}));
    train->add_option("--epochs", train_epochs, "epochs to run")->required();
    train->add_option("--steps-per-epoch", train_steps, "sampled batches per epoch");
    train->add_option("--batch", train_batch, "patches per batch");
    train->add_option("--patch", train_patch, "LR patch size");
    train->add_option("--seed", train_seed, "rng seed");
    train->add_option("--lr", train_lr, "initial learning rate");
    train->add_option("--lr-half-epochs", train_half, "halve the lr every N epochs");
    train->add_option("--out", train_out, "output directory")->required();
    train->add_option("--resume", train_resume, "checkpoint to resume from");
    train_model.attach(train);
    std::string train_config;
    train->add_option("--config", train_config, "key=value config file ('#' comments)");

    // --- infer ---
    auto* infer = app.add_subcommand("infer", "super-resolve one image with a checkpoint");
    std::string infer_ckpt, infer_in, infer_out;
    infer->add_option("--checkpoint", infer_ckpt, "trained checkpoint")->required();
    infer->add_option("--input", infer_in, "input image (PNG or PPM)")->required();
    infer->add_option("--output", infer_out, "output image path")->required();

    // --- eval ---
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM on a dataset (Y channel)");
    std::string eval_root, eval_ckpt, eval_method = "bicubic", eval_json;
    int64_t eval_scale = 2, eval_shave = -1;
    eval->add_option("--dataset", eval_root, "dataset root")->required();
    eval->add_option("--scale", eval_scale, "upscaling factor")->check(CLI::IsMember({1, 2, 3, 4}));
    eval->add_option("--checkpoint", eval_ckpt, "evaluate a trained model");
    eval->add_option("--method", eval_method, "bicubic | identity (ignored with --checkpoint)");
    eval->add_option("--shave", eval_shave, "border crop in pixels (default: scale)");
    eval->add_option("--json", eval_json, "also write a JSON report to this file");

    // --- cost ---
    auto* cost = app.add_subcommand("cost", "analytic parameter/FLOP/memory report");
    std::string cost_size = "1280x720", cost_json;
    int64_t cost_scale = 4;
    ModelFlags cost_model;
    cost->add_option("--scale", cost_scale, "upscaling factor")->check(CLI::IsMember({2, 3, 4}));
    cost->add_option("--input-size", cost_size, "HxW, e.g. 1280x720");
    cost->add_option("--json", cost_json, "also write a JSON report to this file");
    cost_model.attach(cost);
    auto* cost_split = cost->get_option("--split-s");

    // --- gradcheck ---
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string gc_block = "all";
    uint64_t gc_seed = 0;
    int gc_probes = 2;
    gc->add_option("--block", gc_block, "all | hfm | arfb | emha | et | hpb | model");
    gc->add_option("--seed", gc_seed, "rng seed");
    gc->add_option("--probes", gc_probes, "finite-difference probes per tensor");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (train->parsed()) {
            if (!train_config.empty()) {
                // file values fill in whatever the command line left at default
                struct Binding {
                    const char* key;
                    const char* flag;
                    std::function<void(const std::string&)> set;
                };
                auto to_i64 = [](const std::string& v, const char* key) {
                    size_t pos = 0;
                    int64_t out = 0;
                    try {
                        out = std::stoll(v, &pos);
                    } catch (...) {
                        pos = 0;
                    }
                    if (pos != v.size())
                        throw esrt::ConfigError(std::string("bad integer for ") + key + ": " + v);
                    return out;
                };
                auto to_f64 = [](const std::string& v, const char* key) {
                    size_t pos = 0;
                    double out = 0;
                    try {
                        out = std::stod(v, &pos);
                    } catch (...) {
                        pos = 0;
                    }
                    if (pos != v.size())
                        throw esrt::ConfigError(std::string("bad number for ") + key + ": " + v);
                    return out;
                };
                std::vector<Binding> bindings;
                auto bind_i64 = [&](const char* key, const char* flag, int64_t& ref) {
                    bindings.push_back({key, flag, [&ref, key, to_i64](const std::string& v) {
                                            ref = to_i64(v, key);
                                        }});
                };
                bind_i64("channels", "--channels", train_model.channels);
                bind_i64("n-hpb", "--n-hpb", train_model.n_hpb);
                bind_i64("n-et", "--n-et", train_model.n_et);
                bind_i64("pool-k", "--pool-k", train_model.pool_k);
                bind_i64("unfold-k", "--unfold-k", train_model.unfold_k);
                bind_i64("split-s", "--split-s", train_model.split_s);
                bind_i64("heads", "--heads", train_model.heads);
                bind_i64("mlp-ratio", "--mlp-ratio", train_model.mlp_ratio);
                bind_i64("ca-reduction", "--ca-reduction", train_model.ca_reduction);
                bind_i64("shared-reps", "--shared-reps", train_model.shared_reps);
                bind_i64("scale", "--scale", train_scale);
                bind_i64("epochs", "--epochs", train_epochs);
                bind_i64("steps-per-epoch", "--steps-per-epoch", train_steps);
                bind_i64("batch", "--batch", train_batch);
                bind_i64("patch", "--patch", train_patch);
                bind_i64("lr-half-epochs", "--lr-half-epochs", train_half);
                bindings.push_back({"seed", "--seed", [&](const std::string& v) {
                                        train_seed = uint64_t(to_i64(v, "seed"));
                                    }});
                bindings.push_back({"lr", "--lr", [&](const std::string& v) {
                                        train_lr = to_f64(v, "lr");
                                    }});
                bindings.push_back({"data", "--data", [&](const std::string& v) { train_data = v; }});
                bindings.push_back({"out", "--out", [&](const std::string& v) { train_out = v; }});
                bindings.push_back(
                    {"resume", "--resume", [&](const std::string& v) { train_resume = v; }});

                for (const auto& [key, value] : esrt::parse_kv_file(train_config)) {
                    const auto it = std::find_if(bindings.begin(), bindings.end(),
                                                 [&](const Binding& b) { return key == b.key; });
                    if (it == bindings.end())
                        throw esrt::ConfigError("unknown config key: " + key);
                    if (train->count(it->flag) == 0) it->set(value);  // flags win
                }
            }
            esrt::TrainOptions opt;
            opt.cfg = train_model.to_config(train_scale);
            opt.data_root = train_data;
            opt.out_dir = train_out;
            opt.epochs = train_epochs;
            opt.steps_per_epoch = train_steps;
            opt.batch = train_batch;
            opt.patch = train_patch;
            opt.seed = train_seed;
            opt.lr0 = train_lr;
            opt.lr_half_epochs = train_half;
            opt.resume = train_resume;
            echo_config(opt.cfg, opt.seed);
            esrt::TrainResult res = esrt::train(opt);
            std::printf("done: %s\n", res.final_checkpoint.c_str());
            return kExitOk;
        }

        if (infer->parsed()) {
            esrt::Checkpoint ck = esrt::load_checkpoint(infer_ckpt);
            esrt::ImageRGB lr = esrt::read_image(infer_in);
            const auto t0 = std::chrono::steady_clock::now();
            esrt::ImageRGB sr = esrt::infer_image(ck, lr);
            const auto t1 = std::chrono::steady_clock::now();
            esrt::write_png(infer_out, sr);
            std::printf("%lldx%lld -> %lldx%lld (x%lld) in %.3f s\n", (long long)lr.width,
                        (long long)lr.height, (long long)sr.width, (long long)sr.height,
                        (long long)ck.cfg.scale,
                        std::chrono::duration<double>(t1 - t0).count());
            return kExitOk;
        }

        if (eval->parsed()) {
            if (eval_shave < 0) eval_shave = eval_scale;
            esrt::EvalMethod method = esrt::EvalMethod::Bicubic;
            esrt::Checkpoint ck;
            const esrt::Checkpoint* ckp = nullptr;
            if (!eval_ckpt.empty()) {
                ck = esrt::load_checkpoint(eval_ckpt);
                if (ck.cfg.scale != eval_scale)
                    throw esrt::ArgError("checkpoint is x" + std::to_string(ck.cfg.scale) +
                                         " but --scale is " + std::to_string(eval_scale));
                method = esrt::EvalMethod::Model;
                ckp = &ck;
            } else if (eval_method == "identity") {
                method = esrt::EvalMethod::Identity;
            } else if (eval_method != "bicubic") {
                throw esrt::ArgError("unknown --method " + eval_method);
            }
            esrt::EvalResult res =
                esrt::evaluate_dataset(eval_root, eval_scale, method, ckp, eval_shave, eval_threads());
            for (const auto& e : res.per_image)
                std::printf("%-24s psnr %8.4f  ssim %.6f\n", e.name.c_str(), e.psnr, e.ssim);
            std::printf("mean over %zu images: psnr %.4f  ssim %.6f (shave %lld)\n",
                        res.per_image.size(), res.mean_psnr, res.mean_ssim, (long long)eval_shave);
            if (!eval_json.empty()) {
                nlohmann::json j;
                j["dataset"] = eval_root;
                j["scale"] = eval_scale;
                j["method"] = ckp ? "model" : eval_method;
                j["shave"] = eval_shave;
                j["mean_psnr"] = res.mean_psnr;
                j["mean_ssim"] = res.mean_ssim;
                nlohmann::json per = nlohmann::json::array();
                for (const auto& e : res.per_image)
                    per.push_back({{"name", e.name}, {"psnr", e.psnr}, {"ssim", e.ssim}});
                j["per_image"] = per;
                std::ofstream os(eval_json);
                if (!os) throw esrt::IoError("cannot write " + eval_json);
                os << j.dump(2) << "\n";
            }
            return kExitOk;
        }

        if (cost->parsed()) {
            int64_t h = 0, w = 0;
            if (std::sscanf(cost_size.c_str(), "%lldx%lld", (long long*)&h, (long long*)&w) != 2 &&
                std::sscanf(cost_size.c_str(), "%lldX%lld", (long long*)&h, (long long*)&w) != 2)
                throw esrt::ArgError("--input-size must look like 1280x720");
            (void)cost_split;
            esrt::ModelConfig cfg = cost_model.to_config(cost_scale);
            esrt::CostReport rep = esrt::cost_report(cfg, h, w);
            std::fputs(esrt::format_cost_report(rep, cfg).c_str(), stdout);
            if (!cost_json.empty()) {
                std::ofstream os(cost_json);
                if (!os) throw esrt::IoError("cannot write " + cost_json);
                os << esrt::cost_report_json(rep, cfg) << "\n";
            }
            return kExitOk;
        }

        if (gc->parsed()) {
            std::vector<std::string> blocks;
            if (gc_block == "all")
                blocks = esrt::gradcheck_blocks();
            else
                blocks.push_back(gc_block);
            bool all_pass = true;
            for (const auto& b : blocks) {
                esrt::GradCheckReport rep = esrt::gradcheck_block(b, gc_seed, gc_probes);
                std::printf("%-6s max rel err %.3e over %lld probes (tol %.0e) %s%s%s\n",
                            rep.block.c_str(), rep.max_rel_err, (long long)rep.probes, rep.tol,
                            rep.pass ? "ok" : "FAIL", rep.pass ? "" : " at ",
                            rep.pass ? "" : rep.worst.c_str());
                all_pass = all_pass && rep.pass;
            }
            return all_pass ? kExitOk : kExitCheckFailed;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
