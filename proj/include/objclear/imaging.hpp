#pragma once

#include <concepts>
#include <vector>

#include "objclear/raster.hpp"

namespace objclear {

enum class MorphMode { Dilate, Erode };
enum class ResampleMode { Bilinear, Area };

/// Normalized 1-D Gaussian taps of radius ceil(3*sigma). sigma must be > 0.
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with clamp-to-edge borders. sigma == 0 is the identity.
Raster gaussian_blur(const Raster& img, double sigma);

/// Square structuring element of side 2*radius+1. Input must be binary.
Mask morphology(const Mask& mask, int radius, MorphMode mode);

/// Bilinear (half-pixel centers, clamp-to-edge) or area-average resampling.
/// Area mode assumes each output pixel covers a (possibly fractional) block of
/// input pixels and returns the exact coverage-weighted mean.
Raster resample(const Raster& img, int new_height, int new_width, ResampleMode mode);

template <std::derived_from<Raster> T>
T gaussian_blur(const T& img, double sigma) {
    return T(gaussian_blur(static_cast<const Raster&>(img), sigma));
}

template <std::derived_from<Raster> T>
T resample(const T& img, int new_height, int new_width, ResampleMode mode) {
    return T(resample(static_cast<const Raster&>(img), new_height, new_width, mode));
}

}  // namespace objclear
