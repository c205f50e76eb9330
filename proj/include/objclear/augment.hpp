#pragma once

#include "objclear/annotator.hpp"
#include "objclear/raster.hpp"
#include "objclear/rng.hpp"
#include "objclear/synthesizer.hpp"

namespace objclear {

struct AugmentConfig {
    /// Morphology radius = round(morph_scale * sqrt(object area)), at least 1.
    double morph_scale = 0.1;
    double flip_prob = 0.5;
    double crop_fraction_min = 0.8;
    double crop_fraction_max = 1.0;
    /// Per-channel additive offset drawn from [-amplitude, amplitude].
    double color_jitter = 0.05;
    double stroke_width_min = 1.0;
    double stroke_width_max = 3.0;

    void validate() const;
};

/// Radius used by object_aware_morph for a mask with `area` on-pixels.
int object_aware_radius(std::size_t area, double morph_scale);

/// Randomly dilates or erodes with an object-size-dependent radius. An erosion
/// that would empty the mask returns the input unchanged.
Mask object_aware_morph(const Mask& mask, const AugmentConfig& cfg, Rng& rng);

struct StrokeResult {
    Mask mask;
    bool used_fallback = false;
};

/// Coarse user scribble over the object: a 3-6 point polyline through object
/// pixels, rasterized at a random width and dilated by one pixel. Accepted when
/// its area is within [0.2, 1.5] of the object's area; after 50 rejected draws
/// it falls back to object_aware_morph.
StrokeResult simulate_stroke(const Mask& object_mask, const AugmentConfig& cfg, Rng& rng);

/// Geometry and color changes drawn once and applied to every layer.
struct AugmentParams {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;
    bool flip = false;
    double offset[3] = {0.0, 0.0, 0.0};
    bool center_fallback = false;
};

/// Draws a crop window keeping at least half of `keep`'s area (center crop
/// after 50 failures), a flip decision and per-channel color offsets.
AugmentParams draw_augment(const Mask& keep, const AugmentConfig& cfg, Rng& rng);

Image apply_augment(const Image& img, const AugmentParams& p, bool color = true);
Mask apply_augment(const Mask& mask, const AugmentParams& p);

CompositeSample sample_augment(const CompositeSample& sample, const AugmentConfig& cfg, Rng& rng);
CounterfactualPair sample_augment(const CounterfactualPair& pair, const AugmentConfig& cfg, Rng& rng);

}  // namespace objclear
