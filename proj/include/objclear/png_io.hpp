#pragma once

#include <filesystem>

#include "objclear/raster.hpp"

namespace objclear {

/// 8-bit RGB (gray and RGBA are converted). Values are divided by 255.
Image read_image_png(const std::filesystem::path& path);
/// 8-bit grayscale (RGB inputs take the first channel). Values divided by 255.
Mask read_mask_png(const std::filesystem::path& path);
/// Like read_mask_png, thresholded at 128 into {0,1}.
Mask read_binary_mask_png(const std::filesystem::path& path);

void write_image_png(const std::filesystem::path& path, const Image& img);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

/// 16-bit grayscale/RGB storage of values in [-1,1], scaled linearly to [0,65535].
void write_signed16_png(const std::filesystem::path& path, const Raster& values);
Raster read_signed16_png(const std::filesystem::path& path);

}  // namespace objclear
