#pragma once

#include <optional>
#include <string>

#include "objclear/raster.hpp"

namespace objclear {

/// A scene photographed with (input) and without (ground_truth) the object.
struct CounterfactualPair {
    Image input;
    Image ground_truth;
    Mask object_mask;

    /// Throws InvalidArgument unless all three share dimensions and the mask is binary.
    void validate() const;
};

struct AnnotationSet {
    Mask object_mask;
    Mask effect_mask;
    Mask object_effect_mask;
    double threshold_used = 0.0;
};

/// Extracted foreground layer, cropped to the bounding box of its
/// object-effect mask. `origin` is where that box sat in the source frame.
struct ForegroundAsset {
    std::string id;
    Image color;
    AlphaMap alpha;
    Mask object_mask;
    Mask effect_mask;
    int direction_bin = 0;
    int origin_row = 0;
    int origin_col = 0;

    int height() const noexcept { return color.height(); }
    int width() const noexcept { return color.width(); }
    Mask object_effect_mask() const { return mask_or(object_mask, effect_mask); }
};

struct AnnotatorConfig {
    double threshold = 0.05;
    double epsilon = 1e-6;
    int closing_radius = 1;
};

/// Difference mask: max-channel |I_in - I_gt| > threshold, closed with a square
/// element, then unioned with the object mask.
Mask diff_mask(const CounterfactualPair& pair, double threshold, int closing_radius = 1);

/// M_e = M_fg AND NOT M_o.
Mask derive_effect_mask(const Mask& object_effect_mask, const Mask& object_mask);

/// Runs diff_mask + derive_effect_mask and packages the result.
AnnotationSet annotate(const CounterfactualPair& pair, const AnnotatorConfig& cfg = {});

/// Direction from the object centroid to the effect centroid, in 8 bins of
/// 45 degrees; bin 0 is centered on east (+col), counterclockwise (bin 2 is north,
/// i.e. decreasing row). Throws NoEffectError for an empty effect mask.
int estimate_shadow_direction(const Mask& object_mask, const Mask& effect_mask);

/// Per-channel alpha and color layer. When the effect mask is empty the
/// direction bin falls back to `fallback_bin` if given, otherwise NoEffectError
/// propagates.
ForegroundAsset extract_alpha(const CounterfactualPair& pair, const AnnotationSet& annotations,
                              double epsilon = 1e-6, std::optional<int> fallback_bin = std::nullopt);

/// Alpha and color layer at full frame size, before cropping.
struct FullFrameLayer {
    Image color;
    AlphaMap alpha;
};
FullFrameLayer compute_alpha_layer(const CounterfactualPair& pair, const AnnotationSet& annotations,
                                   double epsilon = 1e-6);

/// Crops full-frame layers to the bounding box of object_mask OR effect_mask.
ForegroundAsset crop_asset(const Image& color, const AlphaMap& alpha, const Mask& object_mask,
                           const Mask& effect_mask, int direction_bin);

}  // namespace objclear
