#include "objclear/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace objclear {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open file: " + path.string());
    return f;
}

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
    auto* path = static_cast<const std::string*>(png_get_error_ptr(png));
    throw IoError("png error in " + (path ? *path : std::string("?")) + ": " + msg);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct Decoded {
    int height = 0;
    int width = 0;
    int channels = 0;  // 1 or 3 after normalization
    int bit_depth = 8;
    std::vector<std::uint16_t> samples;
};

Decoded decode(const std::filesystem::path& path, bool keep16) {
    auto file = open_file(path, "rb");
    std::string where = path.string();
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, &where, png_error_fn, png_warning_fn);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* png;
        png_infop* info;
        ~Guard() { png_destroy_read_struct(png, info, nullptr); }
    } guard{&png, &info};

    png_init_io(png, file.get());
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (depth == 16 && !keep16) png_set_strip_16(png);
    if (depth == 16 && keep16) png_set_swap(png);
    png_read_update_info(png, info);

    Decoded d;
    d.height = static_cast<int>(png_get_image_height(png, info));
    d.width = static_cast<int>(png_get_image_width(png, info));
    d.channels = png_get_channels(png, info);
    d.bit_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_byte> buf(rowbytes * static_cast<std::size_t>(d.height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(d.height));
    for (int r = 0; r < d.height; ++r) rows[static_cast<std::size_t>(r)] = buf.data() + r * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    const std::size_t n = static_cast<std::size_t>(d.height) * d.width * d.channels;
    d.samples.resize(n);
    if (d.bit_depth == 16) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint16_t v;
            std::memcpy(&v, buf.data() + 2 * i, 2);
            d.samples[i] = v;
        }
    } else {
        // rows are contiguous without padding for 8-bit data
        for (std::size_t i = 0; i < n; ++i) d.samples[i] = buf[i];
    }
    return d;
}

void encode(const std::filesystem::path& path, int height, int width, int channels, int bit_depth,
            const std::vector<std::uint16_t>& samples) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto file = open_file(path, "wb");
    std::string where = path.string();
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, &where, png_error_fn, png_warning_fn);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* png;
        png_infop* info;
        ~Guard() { png_destroy_write_struct(png, info); }
    } guard{&png, &info};

    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);

    const std::size_t bytes = bit_depth == 16 ? 2 : 1;
    const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * bytes;
    std::vector<png_byte> buf(rowbytes * static_cast<std::size_t>(height));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (bytes == 2) {
            std::memcpy(buf.data() + 2 * i, &samples[i], 2);
        } else {
            buf[i] = static_cast<png_byte>(samples[i]);
        }
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int r = 0; r < height; ++r) rows[static_cast<std::size_t>(r)] = buf.data() + r * rowbytes;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
}

std::uint16_t quantize(double v, double scale) {
    return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * scale));
}

}  // namespace

Image read_image_png(const std::filesystem::path& path) {
    const Decoded d = decode(path, false);
    Image img(d.height, d.width);
    for (int r = 0; r < d.height; ++r)
        for (int c = 0; c < d.width; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                const int src = d.channels == 3 ? ch : 0;
                img.at(r, c, ch) =
                    d.samples[(static_cast<std::size_t>(r) * d.width + c) * d.channels + src] / 255.0;
            }
    return img;
}

Mask read_mask_png(const std::filesystem::path& path) {
    const Decoded d = decode(path, false);
    Mask m(d.height, d.width);
    for (int r = 0; r < d.height; ++r)
        for (int c = 0; c < d.width; ++c)
            m.at(r, c) = d.samples[(static_cast<std::size_t>(r) * d.width + c) * d.channels] / 255.0;
    return m;
}

Mask read_binary_mask_png(const std::filesystem::path& path) {
    const Decoded d = decode(path, false);
    Mask m(d.height, d.width);
    for (int r = 0; r < d.height; ++r)
        for (int c = 0; c < d.width; ++c)
            m.at(r, c) =
                d.samples[(static_cast<std::size_t>(r) * d.width + c) * d.channels] >= 128 ? 1.0 : 0.0;
    return m;
}

void write_image_png(const std::filesystem::path& path, const Image& img) {
    std::vector<std::uint16_t> s(img.size());
    auto v = img.values();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = quantize(v[i], 255.0);
    encode(path, img.height(), img.width(), 3, 8, s);
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
    std::vector<std::uint16_t> s(mask.size());
    auto v = mask.values();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = quantize(v[i], 255.0);
    encode(path, mask.height(), mask.width(), 1, 8, s);
}

void write_signed16_png(const std::filesystem::path& path, const Raster& values) {
    if (values.channels() != 1 && values.channels() != 3) {
        throw InvalidArgument("write_signed16_png: 1 or 3 channels required");
    }
    std::vector<std::uint16_t> s(values.size());
    auto v = values.values();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = quantize((v[i] + 1.0) / 2.0, 65535.0);
    encode(path, values.height(), values.width(), values.channels(), 16, s);
}

Raster read_signed16_png(const std::filesystem::path& path) {
    const Decoded d = decode(path, true);
    if (d.bit_depth != 16) throw IoError("expected a 16-bit png: " + path.string());
    Raster out(d.height, d.width, d.channels);
    auto v = out.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = d.samples[i] / 65535.0 * 2.0 - 1.0;
    return out;
}

}  // namespace objclear
