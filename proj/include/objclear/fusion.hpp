#pragma once

#include <span>

#include "objclear/raster.hpp"

namespace objclear {

struct FusionConfig {
    /// Gaussian sigma in output pixels; a negative value means image_side / 32.
    double blur_sigma = -1.0;
    /// Attention below this is zeroed before upsampling.
    double floor = 0.02;

    double resolved_sigma(int out_h, int out_w) const;
};

/// Soft object-effect mask from an object-token attention slice (rows x cols,
/// row-major): floor clamp, bilinear upsample, Gaussian blur, divide by max.
Mask attention_to_mask(const Mask& slice, int out_h, int out_w, const FusionConfig& cfg = {});

/// out = m * generated + (1 - m) * original, per channel.
Image fuse(const Image& original, const Image& generated, const Mask& soft_mask);

}  // namespace objclear
