#include "objclear/augment.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "objclear/imaging.hpp"

namespace objclear {

void AugmentConfig::validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!(morph_scale >= 0.0)) throw InvalidArgument("augment: morph_scale must be >= 0");
    if (!prob(flip_prob)) throw InvalidArgument("augment: flip_prob must lie in [0,1]");
    if (!(crop_fraction_min > 0.0 && crop_fraction_min <= crop_fraction_max && crop_fraction_max <= 1.0)) {
        throw InvalidArgument("augment: crop fractions must satisfy 0 < min <= max <= 1");
    }
    if (!(color_jitter >= 0.0)) throw InvalidArgument("augment: color_jitter must be >= 0");
    if (!(stroke_width_min > 0.0 && stroke_width_min <= stroke_width_max)) {
        throw InvalidArgument("augment: stroke widths must satisfy 0 < min <= max");
    }
}

int object_aware_radius(std::size_t area, double morph_scale) {
    const double r = std::round(morph_scale * std::sqrt(static_cast<double>(area)));
    return std::max(1, static_cast<int>(r));
}

Mask object_aware_morph(const Mask& mask, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t area = mask.count_on();
    if (area == 0) throw InvalidArgument("object_aware_morph: mask is empty");
    const int radius = object_aware_radius(area, cfg.morph_scale);
    const bool dilate = rng.bernoulli(0.5);
    Mask out = morphology(mask, radius, dilate ? MorphMode::Dilate : MorphMode::Erode);
    if (!out.any()) return mask;
    return out;
}

namespace {

double segment_distance(double pr, double pc, double ar, double ac, double br, double bc) {
    const double dr = br - ar, dc = bc - ac;
    const double len2 = dr * dr + dc * dc;
    double t = len2 > 0.0 ? ((pr - ar) * dr + (pc - ac) * dc) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(pr - (ar + t * dr), pc - (ac + t * dc));
}

}  // namespace

StrokeResult simulate_stroke(const Mask& object_mask, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<std::pair<int, int>> inside;
    for (int r = 0; r < object_mask.height(); ++r)
        for (int c = 0; c < object_mask.width(); ++c)
            if (object_mask.at(r, c) > 0.5) inside.emplace_back(r, c);
    if (inside.empty()) throw InvalidArgument("simulate_stroke: object mask is empty");

    const double area = static_cast<double>(inside.size());
    constexpr int kTries = 50;
    for (int attempt = 0; attempt < kTries; ++attempt) {
        const int points = rng.uniform_int(3, 6);
        std::vector<std::pair<double, double>> ctrl;
        for (int i = 0; i < points; ++i) {
            const auto& p = inside[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(inside.size()) - 1))];
            ctrl.emplace_back(p.first, p.second);
        }
        const double half = rng.uniform(cfg.stroke_width_min, cfg.stroke_width_max) / 2.0;

        Mask stroke(object_mask.height(), object_mask.width());
        for (int r = 0; r < stroke.height(); ++r)
            for (int c = 0; c < stroke.width(); ++c)
                for (std::size_t s = 0; s + 1 < ctrl.size(); ++s) {
                    if (segment_distance(r, c, ctrl[s].first, ctrl[s].second, ctrl[s + 1].first,
                                         ctrl[s + 1].second) <= half) {
                        stroke.at(r, c) = 1.0;
                        break;
                    }
                }
        stroke = morphology(stroke, 1, MorphMode::Dilate);
        const double ratio = static_cast<double>(stroke.count_on()) / area;
        if (ratio >= 0.2 && ratio <= 1.5) return {std::move(stroke), false};
    }
    return {object_aware_morph(object_mask, cfg, rng), true};
}

AugmentParams draw_augment(const Mask& keep, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    const int h = keep.height(), w = keep.width();
    const std::size_t total = keep.count_on();

    auto retained = [&](int top, int left, int ch, int cw) {
        std::size_t n = 0;
        for (int r = top; r < top + ch; ++r)
            for (int c = left; c < left + cw; ++c)
                if (keep.at(r, c) > 0.5) ++n;
        return 2 * n >= total;
    };

    AugmentParams p;
    bool found = false;
    for (int attempt = 0; attempt < 50 && !found; ++attempt) {
        const double f = rng.uniform(cfg.crop_fraction_min, cfg.crop_fraction_max);
        const int ch = std::clamp(static_cast<int>(std::lround(f * h)), 1, h);
        const int cw = std::clamp(static_cast<int>(std::lround(f * w)), 1, w);
        const int top = rng.uniform_int(0, h - ch);
        const int left = rng.uniform_int(0, w - cw);
        if (retained(top, left, ch, cw)) {
            p.top = top;
            p.left = left;
            p.height = ch;
            p.width = cw;
            found = true;
        }
    }
    if (!found) {
        p.height = std::clamp(static_cast<int>(std::lround(cfg.crop_fraction_max * h)), 1, h);
        p.width = std::clamp(static_cast<int>(std::lround(cfg.crop_fraction_max * w)), 1, w);
        p.top = (h - p.height) / 2;
        p.left = (w - p.width) / 2;
        p.center_fallback = true;
    }
    p.flip = rng.bernoulli(cfg.flip_prob);
    for (double& o : p.offset) o = rng.uniform(-cfg.color_jitter, cfg.color_jitter);
    return p;
}

namespace {

Raster crop_flip(const Raster& src, const AugmentParams& p) {
    if (p.top < 0 || p.left < 0 || p.top + p.height > src.height() || p.left + p.width > src.width()) {
        throw InvalidArgument("augment: crop window exceeds the raster");
    }
    Raster out(p.height, p.width, src.channels());
    for (int r = 0; r < p.height; ++r)
        for (int c = 0; c < p.width; ++c) {
            const int sc = p.flip ? p.left + p.width - 1 - c : p.left + c;
            for (int ch = 0; ch < src.channels(); ++ch) out.at(r, c, ch) = src.at(p.top + r, sc, ch);
        }
    return out;
}

}  // namespace

Image apply_augment(const Image& img, const AugmentParams& p, bool color) {
    Image out(crop_flip(img, p));
    if (color) {
        for (int r = 0; r < out.height(); ++r)
            for (int c = 0; c < out.width(); ++c)
                for (int ch = 0; ch < Image::kChannels; ++ch)
                    out.at(r, c, ch) = std::clamp(out.at(r, c, ch) + p.offset[ch], 0.0, 1.0);
    }
    return out;
}

Mask apply_augment(const Mask& mask, const AugmentParams& p) { return Mask(crop_flip(mask, p)); }

CompositeSample sample_augment(const CompositeSample& sample, const AugmentConfig& cfg, Rng& rng) {
    const AugmentParams p = draw_augment(sample.object_effect_mask, cfg, rng);
    CompositeSample out = sample;
    out.composite = apply_augment(sample.composite, p);
    out.ground_truth = apply_augment(sample.ground_truth, p);
    out.object_mask = apply_augment(sample.object_mask, p);
    out.object_effect_mask = apply_augment(sample.object_effect_mask, p);
    return out;
}

CounterfactualPair sample_augment(const CounterfactualPair& pair, const AugmentConfig& cfg, Rng& rng) {
    pair.validate();
    const AugmentParams p = draw_augment(pair.object_mask, cfg, rng);
    return {apply_augment(pair.input, p), apply_augment(pair.ground_truth, p),
            apply_augment(pair.object_mask, p)};
}

}  // namespace objclear
