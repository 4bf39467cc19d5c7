#include "doctest.h"

#ifdef ESRT_CLI_PATH

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "esrt/dataset.hpp"
#include "esrt/image.hpp"

namespace fs = std::filesystem;

namespace {

const char* kCli = ESRT_CLI_PATH;

fs::path temp_dir(const char* name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args, const fs::path& out_file = {}) {
    std::string cmd = std::string(kCli) + " " + args;
    if (!out_file.empty())
        cmd += " > " + out_file.string() + " 2>&1";
    else
        cmd += " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void make_dataset(const fs::path& root, int64_t side) {
    fs::create_directories(root / "HR");
    esrt::Rng rng(3);
    esrt::ImageRGB img(side, side);
    for (int64_t y = 0; y < side; ++y)
        for (int64_t x = 0; x < side; ++x) {
            img.at(y, x, 0) = uint8_t((x * 13 + y * 7) % 256);
            img.at(y, x, 1) = uint8_t(rng.below(256));
            img.at(y, x, 2) = uint8_t((x * x + y) % 256);
        }
    esrt::write_png((root / "HR" / "img.png").string(), img);
}

}  // namespace

TEST_CASE("usage errors exit with 2 and help exits with 0") {
    CHECK(run("") == 2);
    CHECK(run("train") == 2);              // missing required flags
    CHECK(run("train --out /tmp/x") == 2); // still missing --data/--epochs
    CHECK(run("definitely-not-a-command") == 2);
    CHECK(run("--help") == 0);
    for (const char* sub : {"train", "infer", "eval", "cost", "gradcheck"})
        CHECK(run(std::string(sub) + " --help") == 0);
    CHECK(run("eval --dataset /nonexistent --scale 2") == 2);
    CHECK(run("train --data /nonexistent --epochs 1 --out /tmp/esrt_cli_none") == 2);
}

TEST_CASE("cost command prints and serializes a report") {
    auto dir = temp_dir("esrt_cli_cost");
    const fs::path txt = dir / "out.txt";
    const fs::path js = dir / "cost.json";
    CHECK(run("cost --scale 4 --input-size 1280x720 --json " + js.string(), txt) == 0);
    const std::string out = slurp(txt);
    CHECK(out.find("parameters:") != std::string::npos);
    CHECK(out.find("1 MAC = 2 FLOPs") != std::string::npos);
    auto j = nlohmann::json::parse(slurp(js));
    const int64_t params = j["params_total"].get<int64_t>();
    CHECK(params >= 600000);
    CHECK(params <= 900000);
    // score memory strictly decreasing across the s sweep
    auto sweep = j["attn_scores"]["sweep"];
    int64_t prev = -1;
    for (const auto& e : sweep) {
        const int64_t elems = e["elems"].get<int64_t>();
        if (prev > 0) CHECK(elems < prev);
        prev = elems;
    }
    CHECK(run("cost --input-size nonsense") == 2);
}

TEST_CASE("gradcheck command") {
    auto dir = temp_dir("esrt_cli_gc");
    const fs::path a = dir / "a.txt", b = dir / "b.txt";
    CHECK(run("gradcheck --block hfm --seed 5", a) == 0);
    CHECK(run("gradcheck --block hfm --seed 5", b) == 0);
    CHECK(slurp(a) == slurp(b));  // fixed seed, identical reported errors
    CHECK(run("gradcheck --block nonsense") == 2);
}

TEST_CASE("train, infer and eval round-trip through the CLI") {
    auto data = temp_dir("esrt_cli_data");
    make_dataset(data, 48);
    auto out = temp_dir("esrt_cli_out");

    // a config file supplies the model shape; flags take precedence
    const fs::path conf = out / "model.conf";
    std::ofstream(conf) << "# tiny model\nchannels=8\nn-hpb=1\nheads=4\nshared-reps=2\n";
    const std::string common = "train --data " + data.string() + " --scale 2 --epochs 1 "
                               "--steps-per-epoch 2 --batch 2 --patch 12 --seed 3 --lr 1e-3 ";

    auto o1 = temp_dir("esrt_cli_run1");
    auto o2 = temp_dir("esrt_cli_run2");
    const fs::path log1 = out / "t1.txt";
    CHECK(run(common + "--config " + conf.string() + " --out " + o1.string(), log1) == 0);
    CHECK(run(common + "--config " + conf.string() + " --out " + o2.string()) == 0);
    CHECK(slurp(log1).find("config:") != std::string::npos);  // effective config echoed

    // same seed -> identical checkpoints
    REQUIRE(fs::exists(o1 / "esrt_e0001.ckpt"));
    CHECK(slurp(o1 / "esrt_e0001.ckpt") == slurp(o2 / "esrt_e0001.ckpt"));

    // unknown config key is rejected
    std::ofstream(out / "bad.conf") << "definitely_not_a_key=1\n";
    CHECK(run(common + "--config " + (out / "bad.conf").string() + " --out " + o1.string()) == 2);

    // infer: LR 24x24 -> SR 48x48
    const fs::path lr_png = out / "lr.png";
    esrt::ImageRGB lr(24, 24);
    for (auto& p : lr.pixels) p = 77;
    esrt::write_png(lr_png.string(), lr);
    const fs::path sr_png = out / "sr.png";
    const std::string ckpt = (o1 / "esrt_e0001.ckpt").string();
    CHECK(run("infer --checkpoint " + ckpt + " --input " + lr_png.string() + " --output " +
              sr_png.string()) == 0);
    auto sr = esrt::read_image(sr_png.string());
    CHECK(sr.height == 48);
    CHECK(sr.width == 48);

    // determinism of inference
    const fs::path sr2_png = out / "sr2.png";
    CHECK(run("infer --checkpoint " + ckpt + " --input " + lr_png.string() + " --output " +
              sr2_png.string()) == 0);
    CHECK(slurp(sr_png) == slurp(sr2_png));

    // non-image input and mismatched checkpoint scale
    std::ofstream(out / "junk.bin") << "garbage";
    CHECK(run("infer --checkpoint " + ckpt + " --input " + (out / "junk.bin").string() +
              " --output " + sr_png.string()) == 2);
    CHECK(run("eval --dataset " + data.string() + " --scale 3 --checkpoint " + ckpt) == 2);

    // identity eval: psnr inf, ssim 1; json report matches the printed means
    const fs::path ev = out / "eval.txt";
    const fs::path ej = out / "eval.json";
    CHECK(run("eval --dataset " + data.string() + " --scale 2 --method identity --json " +
              ej.string(), ev) == 0);
    CHECK(slurp(ev).find("inf") != std::string::npos);
    auto j = nlohmann::json::parse(slurp(ej));
    CHECK(j["per_image"].size() == 1);
    CHECK(j["mean_ssim"].get<double>() == doctest::Approx(1.0));

    // bicubic eval runs and reports finite psnr
    const fs::path eb = out / "evalb.json";
    CHECK(run("eval --dataset " + data.string() + " --scale 2 --method bicubic --json " +
              eb.string()) == 0);
    auto jb = nlohmann::json::parse(slurp(eb));
    CHECK(jb["mean_psnr"].get<double>() > 10.0);
    CHECK(jb["mean_psnr"].get<double>() < 60.0);
}

#endif  // ESRT_CLI_PATH
