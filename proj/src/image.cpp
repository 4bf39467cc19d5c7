#include "esrt/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

namespace esrt {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

ImageRGB read_png_file(FILE* f, const std::string& path) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng init failed");
    }
    std::vector<png_bytep> row_ptrs;
    ImageRGB img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode PNG: " + path);
    }
    png_init_io(png, f);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    img = ImageRGB(int64_t(h), int64_t(w));
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y)
        row_ptrs[y] = img.pixels.data() + size_t(y) * size_t(w) * 3;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

ImageRGB read_ppm_file(FILE* f, const std::string& path) {
    auto next_token = [&]() -> long {
        int ch;
        // skip whitespace and '#' comments
        for (;;) {
            ch = std::fgetc(f);
            if (ch == '#') {
                while (ch != '\n' && ch != EOF) ch = std::fgetc(f);
            } else if (!std::isspace(ch)) {
                break;
            }
        }
        long v = 0;
        bool any = false;
        while (std::isdigit(ch)) {
            v = v * 10 + (ch - '0');
            any = true;
            ch = std::fgetc(f);
        }
        if (!any) throw IoError("malformed PPM header: " + path);
        return v;
    };
    const long w = next_token();
    const long h = next_token();
    const long maxval = next_token();
    if (w < 1 || h < 1 || maxval != 255) throw IoError("unsupported PPM (need maxval 255): " + path);
    ImageRGB img(h, w);
    if (std::fread(img.pixels.data(), 1, img.pixels.size(), f) != img.pixels.size())
        throw IoError("truncated PPM: " + path);
    return img;
}

}  // namespace

ImageRGB read_image(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open " + path);
    unsigned char magic[8] = {0};
    const size_t got = std::fread(magic, 1, sizeof(magic), f.get());
    if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) {
        std::rewind(f.get());
        return read_png_file(f.get(), path);
    }
    if (got >= 2 && magic[0] == 'P' && magic[1] == '6') {
        std::fseek(f.get(), 2, SEEK_SET);
        return read_ppm_file(f.get(), path);
    }
    throw IoError("not a PNG or PPM(P6) file: " + path);
}

void write_png(const std::string& path, const ImageRGB& img) {
    if (img.height < 1 || img.width < 1) throw ArgError("write_png: empty image");
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to encode PNG: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int64_t y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() + size_t(y * img.width * 3)));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_ppm(const std::string& path, const ImageRGB& img) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot write " + path);
    std::fprintf(f.get(), "P6\n%lld %lld\n255\n", (long long)img.width, (long long)img.height);
    if (std::fwrite(img.pixels.data(), 1, img.pixels.size(), f.get()) != img.pixels.size())
        throw IoError("short write: " + path);
}

Tensor<float> image_to_tensor(const ImageRGB& img) {
    Tensor<float> t(Shape{3, img.height, img.width});
    const int64_t hw = img.height * img.width;
    for (int64_t i = 0; i < hw; ++i)
        for (int64_t c = 0; c < 3; ++c) t[c * hw + i] = float(img.pixels[size_t(i * 3 + c)]) / 255.0f;
    return t;
}

ImageRGB tensor_to_image(const Tensor<float>& t) {
    Tensor<float> v = t;
    if (v.rank() == 4 && v.dim(0) == 1) v = v.reshaped(Shape{v.dim(1), v.dim(2), v.dim(3)});
    if (v.rank() != 3 || v.dim(0) != 3) throw ShapeError("tensor_to_image expects 3xHxW");
    ImageRGB img(v.dim(1), v.dim(2));
    const int64_t hw = v.dim(1) * v.dim(2);
    for (int64_t i = 0; i < hw; ++i)
        for (int64_t c = 0; c < 3; ++c) {
            float x = v[c * hw + i];
            x = x < 0.0f ? 0.0f : (x > 1.0f ? 1.0f : x);
            img.pixels[size_t(i * 3 + c)] = uint8_t(std::lround(double(x) * 255.0));
        }
    return img;
}

}  // namespace esrt
