#include "objclear/annotator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "objclear/imaging.hpp"

namespace objclear {

void CounterfactualPair::validate() const {
    if (!input.same_extent(ground_truth) || !input.same_extent(object_mask)) {
        throw InvalidArgument("counterfactual pair: input, ground truth and object mask differ in size");
    }
    if (!object_mask.is_binary()) throw InvalidArgument("counterfactual pair: object mask is not binary");
}

Mask diff_mask(const CounterfactualPair& pair, double threshold, int closing_radius) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw InvalidArgument("diff_mask: threshold must lie in (0,1), got " + std::to_string(threshold));
    }
    pair.validate();
    const int h = pair.input.height(), w = pair.input.width();
    Mask raw(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double d = 0.0;
            for (int ch = 0; ch < Image::kChannels; ++ch)
                d = std::max(d, std::abs(pair.input.at(r, c, ch) - pair.ground_truth.at(r, c, ch)));
            raw.at(r, c) = d > threshold ? 1.0 : 0.0;
        }
    const Mask closed = morphology(morphology(raw, closing_radius, MorphMode::Dilate), closing_radius,
                                   MorphMode::Erode);
    return mask_or(closed, pair.object_mask);
}

Mask derive_effect_mask(const Mask& object_effect_mask, const Mask& object_mask) {
    return mask_and_not(object_effect_mask, object_mask);
}

AnnotationSet annotate(const CounterfactualPair& pair, const AnnotatorConfig& cfg) {
    AnnotationSet a;
    a.object_mask = pair.object_mask;
    a.object_effect_mask = diff_mask(pair, cfg.threshold, cfg.closing_radius);
    a.effect_mask = derive_effect_mask(a.object_effect_mask, a.object_mask);
    a.threshold_used = cfg.threshold;
    return a;
}

namespace {

struct Centroid {
    double row = 0.0;
    double col = 0.0;
    std::size_t count = 0;
};

Centroid centroid(const Mask& m) {
    Centroid c;
    for (int r = 0; r < m.height(); ++r)
        for (int col = 0; col < m.width(); ++col)
            if (m.at(r, col) > 0.5) {
                c.row += r;
                c.col += col;
                ++c.count;
            }
    if (c.count > 0) {
        c.row /= static_cast<double>(c.count);
        c.col /= static_cast<double>(c.count);
    }
    return c;
}

}  // namespace

int estimate_shadow_direction(const Mask& object_mask, const Mask& effect_mask) {
    if (!object_mask.same_extent(effect_mask)) {
        throw InvalidArgument("estimate_shadow_direction: mask size mismatch");
    }
    const Centroid obj = centroid(object_mask);
    const Centroid eff = centroid(effect_mask);
    if (eff.count == 0) throw NoEffectError("estimate_shadow_direction: effect mask is empty");
    if (obj.count == 0) throw InvalidArgument("estimate_shadow_direction: object mask is empty");

    // Image rows grow downward; flip so that north is +y.
    const double angle = std::atan2(obj.row - eff.row, eff.col - obj.col);
    const double step = std::numbers::pi / 4.0;
    int bin = static_cast<int>(std::floor(angle / step + 0.5));
    return ((bin % 8) + 8) % 8;
}

FullFrameLayer compute_alpha_layer(const CounterfactualPair& pair, const AnnotationSet& annotations,
                                   double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidArgument("extract_alpha: epsilon must be positive");
    pair.validate();
    if (!pair.input.same_extent(annotations.object_mask) ||
        !pair.input.same_extent(annotations.effect_mask) ||
        !pair.input.same_extent(annotations.object_effect_mask)) {
        throw InvalidArgument("extract_alpha: annotations do not match the pair's size");
    }
    const int h = pair.input.height(), w = pair.input.width();
    FullFrameLayer layer{Image(h, w), AlphaMap(h, w)};
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const bool in_object = annotations.object_mask.at(r, c) > 0.5;
            const bool in_effect = !in_object && annotations.effect_mask.at(r, c) > 0.5 &&
                                   annotations.object_effect_mask.at(r, c) > 0.5;
            for (int ch = 0; ch < Image::kChannels; ++ch) {
                if (in_object) {
                    layer.alpha.at(r, c, ch) = 1.0;
                    layer.color.at(r, c, ch) = pair.input.at(r, c, ch);
                } else if (in_effect) {
                    const double gt = pair.ground_truth.at(r, c, ch);
                    const double in = pair.input.at(r, c, ch);
                    layer.alpha.at(r, c, ch) = std::clamp((gt - in) / (gt + epsilon), -1.0, 1.0);
                }
            }
        }
    return layer;
}

ForegroundAsset crop_asset(const Image& color, const AlphaMap& alpha, const Mask& object_mask,
                           const Mask& effect_mask, int direction_bin) {
    if (!color.same_extent(alpha) || !color.same_extent(object_mask) || !color.same_extent(effect_mask)) {
        throw InvalidArgument("crop_asset: layer sizes differ");
    }
    if (direction_bin < 0 || direction_bin > 7) throw InvalidArgument("crop_asset: direction bin must lie in 0..7");
    const Mask fg = mask_or(object_mask, effect_mask);
    int r0 = fg.height(), r1 = -1, c0 = fg.width(), c1 = -1;
    for (int r = 0; r < fg.height(); ++r)
        for (int c = 0; c < fg.width(); ++c)
            if (fg.at(r, c) > 0.5) {
                r0 = std::min(r0, r);
                r1 = std::max(r1, r);
                c0 = std::min(c0, c);
                c1 = std::max(c1, c);
            }
    if (r1 < 0) throw InvalidArgument("crop_asset: object-effect mask is empty");

    const int h = r1 - r0 + 1, w = c1 - c0 + 1;
    ForegroundAsset asset;
    asset.direction_bin = direction_bin;
    asset.color = Image(h, w);
    asset.alpha = AlphaMap(h, w);
    asset.object_mask = Mask(h, w);
    asset.effect_mask = Mask(h, w);
    asset.origin_row = r0;
    asset.origin_col = c0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            for (int ch = 0; ch < Image::kChannels; ++ch) {
                asset.color.at(r, c, ch) = color.at(r0 + r, c0 + c, ch);
                asset.alpha.at(r, c, ch) = alpha.at(r0 + r, c0 + c, ch);
            }
            asset.object_mask.at(r, c) = object_mask.at(r0 + r, c0 + c);
            asset.effect_mask.at(r, c) = effect_mask.at(r0 + r, c0 + c);
        }
    return asset;
}

ForegroundAsset extract_alpha(const CounterfactualPair& pair, const AnnotationSet& annotations,
                              double epsilon, std::optional<int> fallback_bin) {
    const FullFrameLayer layer = compute_alpha_layer(pair, annotations, epsilon);
    int bin = 0;
    if (annotations.effect_mask.any()) {
        bin = estimate_shadow_direction(annotations.object_mask, annotations.effect_mask);
    } else if (fallback_bin) {
        bin = *fallback_bin;
    } else {
        throw NoEffectError("extract_alpha: effect mask is empty; supply a direction bin manually");
    }
    return crop_asset(layer.color, layer.alpha, annotations.object_mask, annotations.effect_mask, bin);
}

}  // namespace objclear
