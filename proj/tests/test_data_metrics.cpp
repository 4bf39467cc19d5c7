#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "esrt/dataset.hpp"
#include "esrt/metrics.hpp"
#include "esrt/resize.hpp"

using namespace esrt;
namespace fs = std::filesystem;

namespace {

ImageRGB random_image(Rng& rng, int64_t h, int64_t w) {
    ImageRGB img(h, w);
    for (auto& p : img.pixels) p = uint8_t(rng.below(256));
    return img;
}

fs::path temp_dir(const char* name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("bicubic matches hand-evaluated kernel weights") {
    // upscale x2 of [0,1,2,3]; weights for a half-pixel phase are
    // {-0.0234375, 0.2265625, 0.8671875, -0.0703125} and borders replicate
    const std::vector<double> row{0, 1, 2, 3};
    const std::vector<double> want{-0.0703125, 0.1796875, 0.7265625, 1.25,
                                   1.75,       2.2734375, 2.8203125, 3.0703125};
    auto got = bicubic_resize_plane(row, 1, 4, 1, 8, true);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

    // antialiased x1/2 of squares: kernel halves and widens to 8 taps
    const std::vector<double> sq{0, 1, 4, 9, 16, 25, 36, 49};
    const std::vector<double> want_dn{0.3828125, 6.26171875, 20.42578125, 42.2734375};
    auto dn = bicubic_resize_plane(sq, 1, 8, 1, 4, true);
    REQUIRE(dn.size() == want_dn.size());
    for (size_t i = 0; i < want_dn.size(); ++i)
        CHECK(dn[i] == doctest::Approx(want_dn[i]).epsilon(1e-12));

    // vertical pass uses the same weights
    auto col = bicubic_resize_plane(row, 4, 1, 8, 1, true);
    for (size_t i = 0; i < want.size(); ++i) CHECK(col[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("bicubic trivial cases") {
    Rng rng(1);
    ImageRGB c(5, 7);
    for (auto& p : c.pixels) p = 143;
    auto big = bicubic_resize(c, 11, 13, true);
    for (auto p : big.pixels) CHECK(p == 143);
    auto small = bicubic_resize(c, 2, 3, true);
    for (auto p : small.pixels) CHECK(p == 143);

    auto img = random_image(rng, 9, 8);
    auto same = bicubic_resize(img, 9, 8, true);
    CHECK(same.pixels == img.pixels);

    CHECK_THROWS_AS(bicubic_resize(img, 0, 5, true), ArgError);
}

TEST_CASE("rgb_to_y endpoints and linearity") {
    ImageRGB black(1, 1), white(1, 1), gray(1, 1);
    for (auto& p : white.pixels) p = 255;
    for (auto& p : gray.pixels) p = 102;  // v = 0.4

    CHECK(rgb_to_y(black)[0] == doctest::Approx(16.0 / 255.0).epsilon(1e-9));
    CHECK(rgb_to_y(white)[0] == doctest::Approx(235.0 / 255.0).epsilon(1e-6));
    CHECK(rgb_to_y(gray)[0] ==
          doctest::Approx(16.0 / 255.0 + 219.0 * 0.4 / 255.0).epsilon(1e-6));
}

TEST_CASE("psnr_y") {
    Rng rng(2);
    auto a = random_image(rng, 24, 30);
    CHECK(std::isinf(psnr_y(a, a, 2)));

    // uniform error of one 8-bit step on the luma: 20*log10(255/219*255/...)
    // constructed directly on Y via gray images: Y difference = 219/255 * 1/255
    ImageRGB g1(16, 16), g2(16, 16);
    for (auto& p : g1.pixels) p = 100;
    for (auto& p : g2.pixels) p = 101;
    const double dy = 219.0 / 255.0 / 255.0;
    CHECK(psnr_y(g1, g2, 0) == doctest::Approx(-20.0 * std::log10(dy)).epsilon(1e-6));

    // symmetry and monotonicity in noise amplitude
    auto noisy = [&](const ImageRGB& base, int amp) {
        ImageRGB out = base;
        Rng nr(7);
        for (auto& p : out.pixels) {
            int v = int(p) + int(nr.below(2 * amp + 1)) - amp;
            p = uint8_t(std::clamp(v, 0, 255));
        }
        return out;
    };
    auto n1 = noisy(a, 3), n2 = noisy(a, 25);
    CHECK(psnr_y(a, n1, 2) == doctest::Approx(psnr_y(n1, a, 2)));
    CHECK(psnr_y(a, n1, 2) > psnr_y(a, n2, 2));

    ImageRGB other(10, 10);
    CHECK_THROWS_AS(psnr_y(a, other, 0), ShapeError);
    ImageRGB tiny(3, 3);
    CHECK_THROWS_AS(psnr_y(tiny, tiny, 2), ShapeError);
}

TEST_CASE("ssim_y") {
    Rng rng(3);
    auto a = random_image(rng, 32, 24);
    CHECK(ssim_y(a, a, 2) == doctest::Approx(1.0).epsilon(1e-9));

    // constant 0 vs constant 1 on Y: means differ, variances are zero, so
    // ssim = (2*mu1*mu2 + C1)*C2 / ((mu1^2+mu2^2+C1)*C2)
    ImageRGB z(16, 16), o(16, 16);
    for (auto& p : o.pixels) p = 255;
    const double mu1 = 16.0 / 255.0, mu2 = 235.0 / 255.0, c1 = 1e-4;
    const double want = (2 * mu1 * mu2 + c1) / (mu1 * mu1 + mu2 * mu2 + c1);
    CHECK(ssim_y(z, o, 0) == doctest::Approx(want).epsilon(1e-9));

    auto b = random_image(rng, 32, 24);
    const double s = ssim_y(a, b, 2);
    CHECK(s <= 1.0);
    CHECK(s >= -1.0);

    ImageRGB tiny(8, 8);
    CHECK_THROWS_AS(ssim_y(tiny, tiny, 0), ArgError);
}

TEST_CASE("image io round-trips") {
    Rng rng(4);
    auto dir = temp_dir("esrt_io_test");
    auto img = random_image(rng, 13, 17);

    write_png((dir / "x.png").string(), img);
    auto back = read_image((dir / "x.png").string());
    CHECK(back.height == 13);
    CHECK(back.width == 17);
    CHECK(back.pixels == img.pixels);

    write_ppm((dir / "x.ppm").string(), img);
    auto back2 = read_image((dir / "x.ppm").string());
    CHECK(back2.pixels == img.pixels);

    std::ofstream(dir / "junk.png") << "not an image";
    CHECK_THROWS_AS(read_image((dir / "junk.png").string()), IoError);
    CHECK_THROWS_AS(read_image((dir / "missing.png").string()), IoError);

    // tensor conversion: [0,1] planar and back
    auto t = image_to_tensor(img);
    CHECK(t.shape() == Shape{3, 13, 17});
    CHECK(t[0] == doctest::Approx(img.pixels[0] / 255.0f));
    auto round = tensor_to_image(t);
    CHECK(round.pixels == img.pixels);
}

TEST_CASE("mod_crop and pair alignment") {
    Rng rng(5);
    auto hr = random_image(rng, 37, 41);
    auto cropped = mod_crop(hr, 4);
    CHECK(cropped.height == 36);
    CHECK(cropped.width == 40);
    CHECK(cropped.at(10, 10, 1) == hr.at(10, 10, 1));

    SrPair p = make_pair(hr, 3, "x");
    CHECK(p.hr.height == 36);
    CHECK(p.lr.height * 3 == p.hr.height);
    CHECK(p.lr.width * 3 == p.hr.width);
}

TEST_CASE("dataset directory layout") {
    Rng rng(6);
    auto root = temp_dir("esrt_ds_test");
    fs::create_directories(root / "HR");
    write_png((root / "HR" / "b.png").string(), random_image(rng, 24, 24));
    write_png((root / "HR" / "a.png").string(), random_image(rng, 20, 28));

    Dataset ds(root.string(), 2);
    REQUIRE(ds.size() == 2);
    CHECK(ds.pair(0).stem == "a");  // sorted by stem
    CHECK(ds.pair(1).stem == "b");
    CHECK(ds.pair(0).lr.height * 2 == ds.pair(0).hr.height);

    // paired LR directory takes precedence over synthesis
    fs::create_directories(root / "LR_x2");
    ImageRGB fake(12, 12);
    for (auto& px : fake.pixels) px = 9;
    write_png((root / "LR_x2" / "b.png").string(), fake);
    Dataset ds2(root.string(), 2);
    CHECK(ds2.pair(1).lr.pixels == fake.pixels);

    CHECK_THROWS_AS(Dataset((root / "HR").string(), 2), DataError);
    auto empty = temp_dir("esrt_ds_empty");
    fs::create_directories(empty / "HR");
    CHECK_THROWS_AS(Dataset(empty.string(), 2), DataError);
}

TEST_CASE("sample_patches alignment and determinism") {
    Rng rng(7);
    auto hr = random_image(rng, 32, 32);
    SrPair pair = make_pair(hr, 2, "img");

    // patch == full LR size forces offset 0; no augmentation: exact copy
    Rng r1(0);
    PatchBatch b = sample_patches(pair, 16, 1, r1, false);
    CHECK(b.lr.shape() == Shape{1, 3, 16, 16});
    CHECK(b.hr.shape() == Shape{1, 3, 32, 32});
    for (int64_t y = 0; y < 16; ++y)
        for (int64_t x = 0; x < 16; ++x)
            for (int64_t c = 0; c < 3; ++c)
                CHECK(b.lr.at(0, c, y, x) == doctest::Approx(pair.lr.at(y, x, c) / 255.0f));
    for (int64_t c = 0; c < 3; ++c)
        CHECK(b.hr.at(0, c, 0, 0) == doctest::Approx(pair.hr.at(0, 0, c) / 255.0f));

    // fixed seed reproduces the batch bit-for-bit
    Rng ra(42), rb(42);
    PatchBatch p1 = sample_patches(pair, 8, 6, ra, true);
    PatchBatch p2 = sample_patches(pair, 8, 6, rb, true);
    for (int64_t i = 0; i < p1.lr.size(); ++i) CHECK(p1.lr[i] == p2.lr[i]);
    for (int64_t i = 0; i < p1.hr.size(); ++i) CHECK(p1.hr[i] == p2.hr[i]);

    CHECK_THROWS_AS(sample_patches(pair, 64, 1, ra, false), ArgError);
}

TEST_CASE("augmentation applies the same dihedral transform to LR and HR") {
    Rng rng(8);
    auto hr = random_image(rng, 16, 16);
    SrPair pair = make_pair(hr, 2, "img");

    // with patch == full image every sample is a transform of the whole frame
    auto transform_of = [](const Tensor<float>& got, const Tensor<float>& base) {
        const int64_t p = base.dim(3);
        for (int t = 0; t < 4; ++t) {
            const bool hflip = t & 1, rot = t & 2;
            bool match = true;
            for (int64_t c = 0; c < 3 && match; ++c)
                for (int64_t y = 0; y < p && match; ++y)
                    for (int64_t x = 0; x < p && match; ++x) {
                        int64_t ty = y, tx = x;
                        if (rot) {
                            ty = p - 1 - x;
                            tx = y;
                        }
                        if (hflip) tx = p - 1 - tx;
                        if (got.at(0, c, y, x) != base.at(0, c, ty, tx)) match = false;
                    }
            if (match) return t;
        }
        return -1;
    };

    Rng rbase(0);
    PatchBatch base = sample_patches(pair, 8, 1, rbase, false);
    Rng raug(9);
    bool saw_nontrivial = false;
    for (int trial = 0; trial < 12; ++trial) {
        PatchBatch aug = sample_patches(pair, 8, 1, raug, true);
        const int t_lr = transform_of(aug.lr, base.lr);
        const int t_hr = transform_of(aug.hr, base.hr);
        CHECK(t_lr >= 0);
        CHECK(t_lr == t_hr);
        if (t_lr > 0) saw_nontrivial = true;
    }
    CHECK(saw_nontrivial);
}
