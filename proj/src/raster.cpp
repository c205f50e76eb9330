#include "objclear/raster.hpp"

#include <algorithm>
#include <string>

namespace objclear {

Raster::Raster(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
    if (height < 1 || width < 1 || channels < 1) {
        throw InvalidArgument("raster dimensions must be positive, got " + std::to_string(height) +
                              "x" + std::to_string(width) + "x" + std::to_string(channels));
    }
    data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
                     static_cast<std::size_t>(channels),
                 fill);
}

double Raster::clamped(int row, int col, int ch) const noexcept {
    row = std::clamp(row, 0, height_ - 1);
    col = std::clamp(col, 0, width_ - 1);
    return at(row, col, ch);
}

namespace {

Raster checked(Raster r, int channels, const char* type) {
    if (r.channels() != channels) {
        throw InvalidArgument(std::string(type) + " requires " + std::to_string(channels) +
                              " channels, got " + std::to_string(r.channels()));
    }
    return r;
}

void require_extent(const Raster& a, const Raster& b, const char* op) {
    if (!a.same_extent(b)) {
        throw InvalidArgument(std::string(op) + ": size mismatch " + std::to_string(a.height()) +
                              "x" + std::to_string(a.width()) + " vs " +
                              std::to_string(b.height()) + "x" + std::to_string(b.width()));
    }
}

}  // namespace

Image::Image(Raster r) : Raster(checked(std::move(r), kChannels, "Image")) {}
Mask::Mask(Raster r) : Raster(checked(std::move(r), kChannels, "Mask")) {}
AlphaMap::AlphaMap(Raster r) : Raster(checked(std::move(r), kChannels, "AlphaMap")) {}

bool Mask::is_binary() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v == 0.0 || v == 1.0; });
}

std::size_t Mask::count_on() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(data_.begin(), data_.end(), [](double v) { return v > 0.5; }));
}

Mask mask_or(const Mask& a, const Mask& b) {
    require_extent(a, b, "mask_or");
    Mask out(a.height(), a.width());
    auto o = out.values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::max(av[i], bv[i]);
    return out;
}

Mask mask_and(const Mask& a, const Mask& b) {
    require_extent(a, b, "mask_and");
    Mask out(a.height(), a.width());
    auto o = out.values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::min(av[i], bv[i]);
    return out;
}

Mask mask_and_not(const Mask& a, const Mask& b) {
    require_extent(a, b, "mask_and_not");
    Mask out(a.height(), a.width());
    auto o = out.values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = (av[i] > 0.5 && bv[i] <= 0.5) ? 1.0 : 0.0;
    return out;
}

Mask binarize(const Mask& m, double threshold) {
    Mask out(m.height(), m.width());
    auto o = out.values();
    auto v = m.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = v[i] > threshold ? 1.0 : 0.0;
    return out;
}

Image apply_mask(const Image& img, const Mask& m) {
    require_extent(img, m, "apply_mask");
    Image out = img;
    for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c)
            for (int ch = 0; ch < Image::kChannels; ++ch) out.at(r, c, ch) *= m.at(r, c);
    return out;
}

Image clamp01(Image img) {
    for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
    return img;
}

}  // namespace objclear
