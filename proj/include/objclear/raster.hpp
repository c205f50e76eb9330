#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "objclear/error.hpp"

namespace objclear {

/// Row-major, channel-interleaved array of doubles. Image, Mask and AlphaMap
/// are thin strong types over this storage.
class Raster {
public:
    Raster() = default;
    Raster(int height, int width, int channels, double fill = 0.0);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
    }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& at(int row, int col, int ch = 0) noexcept {
        return data_[index(row, col, ch)];
    }
    double at(int row, int col, int ch = 0) const noexcept {
        return data_[index(row, col, ch)];
    }

    /// Clamp-to-edge access.
    double clamped(int row, int col, int ch = 0) const noexcept;

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool same_shape(const Raster& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }
    bool same_extent(const Raster& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    bool operator==(const Raster& other) const = default;

protected:
    std::size_t index(int row, int col, int ch) const noexcept {
        return (static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(col)) *
                   static_cast<std::size_t>(channels_) +
               static_cast<std::size_t>(ch);
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// H x W x 3 intensities in [0,1].
class Image : public Raster {
public:
    static constexpr int kChannels = 3;
    Image() = default;
    Image(int height, int width, double fill = 0.0) : Raster(height, width, kChannels, fill) {}
    explicit Image(Raster r);
};

/// H x W values in [0,1]. Binary masks hold only 0 and 1.
class Mask : public Raster {
public:
    static constexpr int kChannels = 1;
    Mask() = default;
    Mask(int height, int width, double fill = 0.0) : Raster(height, width, kChannels, fill) {}
    explicit Mask(Raster r);

    bool is_binary() const noexcept;
    std::size_t count_on() const noexcept;
    bool any() const noexcept { return count_on() > 0; }
};

/// Per-channel blending coefficients in [-1,1].
class AlphaMap : public Raster {
public:
    static constexpr int kChannels = 3;
    AlphaMap() = default;
    AlphaMap(int height, int width, double fill = 0.0) : Raster(height, width, kChannels, fill) {}
    explicit AlphaMap(Raster r);
};

Mask mask_or(const Mask& a, const Mask& b);
Mask mask_and_not(const Mask& a, const Mask& b);
Mask mask_and(const Mask& a, const Mask& b);
/// Values > threshold become 1, others 0.
Mask binarize(const Mask& m, double threshold);

/// Pixelwise product I * M (the visual object I_in ⊙ M_o).
Image apply_mask(const Image& img, const Mask& m);

Image clamp01(Image img);

}  // namespace objclear
