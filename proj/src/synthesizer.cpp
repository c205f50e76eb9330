#include "objclear/synthesizer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>

#include "objclear/imaging.hpp"
#include "objclear/parallel.hpp"
#include "objclear/rng.hpp"

namespace objclear {

BackgroundScene BackgroundScene::from_image(Image img, std::string id) {
    BackgroundScene s;
    s.id = std::move(id);
    s.flat_region = Mask(img.height(), img.width(), 1.0);
    s.image = std::move(img);
    return s;
}

Mask select_placement(const BackgroundScene& scene, const std::set<int>& flat_classes,
                      double depth_grad_threshold) {
    const int h = scene.image.height(), w = scene.image.width();
    const bool have_labels = scene.semantic_labels.has_value();
    const bool have_depth = scene.depth.has_value();
    if (!have_labels && !have_depth) {
        if (scene.flat_region.empty()) {
            throw InvalidInput("select_placement: scene has no semantic labels, depth or flat region");
        }
        if (!scene.flat_region.same_extent(scene.image)) {
            throw InvalidInput("select_placement: flat region does not match the image size");
        }
        return scene.flat_region;
    }
    if (have_labels && (scene.semantic_labels->height != h || scene.semantic_labels->width != w)) {
        throw InvalidInput("select_placement: label map does not match the image size");
    }
    if (have_depth && !scene.depth->same_extent(scene.image)) {
        throw InvalidInput("select_placement: depth map does not match the image size");
    }

    Mask out(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            bool ok = true;
            if (have_labels) ok = flat_classes.contains(scene.semantic_labels->at(r, c));
            if (ok && have_depth) {
                const Mask& d = *scene.depth;
                const double gx = (d.clamped(r, c + 1) - d.clamped(r, c - 1)) / 2.0;
                const double gy = (d.clamped(r + 1, c) - d.clamped(r - 1, c)) / 2.0;
                ok = std::hypot(gx, gy) <= depth_grad_threshold;
            }
            out.at(r, c) = ok ? 1.0 : 0.0;
        }
    return out;
}

namespace {

int scaled_extent(int n, double scale) {
    return std::max(1, static_cast<int>(std::lround(n * scale)));
}

// Last row of the object footprint inside the scaled asset.
int footprint_bottom(const ForegroundAsset& a) {
    const Mask& m = a.object_mask.any() ? a.object_mask : a.effect_mask;
    for (int r = m.height() - 1; r >= 0; --r)
        for (int c = 0; c < m.width(); ++c)
            if (m.at(r, c) > 0.5) return r;
    return m.height() - 1;
}

void check_placement(const BackgroundScene& bg, const ForegroundAsset& scaled, int row, int col) {
    const int h = bg.image.height(), w = bg.image.width();
    if (row < 0 || col < 0 || row + scaled.height() > h || col + scaled.width() > w) {
        throw PlacementError("asset of size " + std::to_string(scaled.height()) + "x" +
                             std::to_string(scaled.width()) + " at (" + std::to_string(row) + "," +
                             std::to_string(col) + ") leaves the " + std::to_string(h) + "x" +
                             std::to_string(w) + " frame");
    }
    for (int r = 0; r < scaled.height(); ++r)
        for (int c = 0; c < scaled.width(); ++c)
            if (scaled.object_mask.at(r, c) > 0.5 && bg.flat_region.at(row + r, col + c) < 0.5) {
                throw PlacementError("object footprint at (" + std::to_string(row + r) + "," +
                                     std::to_string(col + c) + ") is outside the eligible region");
            }
}

void blend_into(CompositeSample& out, const ForegroundAsset& a, int row, int col) {
    for (int r = 0; r < a.height(); ++r)
        for (int c = 0; c < a.width(); ++c) {
            const int rr = row + r, cc = col + c;
            const bool fg = a.object_mask.at(r, c) > 0.5 || a.effect_mask.at(r, c) > 0.5;
            if (!fg) continue;
            for (int ch = 0; ch < Image::kChannels; ++ch) {
                const double alpha = a.alpha.at(r, c, ch);
                const double v =
                    (1.0 - alpha) * out.composite.at(rr, cc, ch) + alpha * a.color.at(r, c, ch);
                out.composite.at(rr, cc, ch) = std::clamp(v, 0.0, 1.0);
            }
            out.object_effect_mask.at(rr, cc) = 1.0;
            if (a.object_mask.at(r, c) > 0.5) out.object_mask.at(rr, cc) = 1.0;
        }
}

}  // namespace

ForegroundAsset scale_asset(const ForegroundAsset& asset, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw InvalidArgument("scale_asset: scale must be finite and positive");
    }
    const int h = scaled_extent(asset.height(), scale);
    const int w = scaled_extent(asset.width(), scale);
    if (h == asset.height() && w == asset.width()) return asset;

    ForegroundAsset s = asset;
    s.color = resample(asset.color, h, w, ResampleMode::Bilinear);
    s.alpha = resample(asset.alpha, h, w, ResampleMode::Bilinear);
    s.object_mask = binarize(resample(asset.object_mask, h, w, ResampleMode::Bilinear), 0.5);
    s.effect_mask = mask_and_not(
        binarize(resample(asset.effect_mask, h, w, ResampleMode::Bilinear), 0.5), s.object_mask);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const bool obj = s.object_mask.at(r, c) > 0.5;
            const bool eff = s.effect_mask.at(r, c) > 0.5;
            for (int ch = 0; ch < Image::kChannels; ++ch) {
                if (obj) {
                    s.alpha.at(r, c, ch) = 1.0;
                } else if (!eff) {
                    s.alpha.at(r, c, ch) = 0.0;
                    s.color.at(r, c, ch) = 0.0;
                } else {
                    s.color.at(r, c, ch) = 0.0;
                }
            }
        }
    return s;
}

CompositeSample compose(const BackgroundScene& bg, const ForegroundAsset& asset, int row, int col,
                        double scale) {
    return compose_multi(bg, {asset}, {{row, col}}, {scale});
}

CompositeSample compose_multi(const BackgroundScene& bg, const std::vector<ForegroundAsset>& assets,
                              const std::vector<std::pair<int, int>>& positions,
                              const std::vector<double>& scales) {
    if (assets.empty() || assets.size() > 4) {
        throw InvalidArgument("compose_multi: between 1 and 4 assets required, got " +
                              std::to_string(assets.size()));
    }
    if (positions.size() != assets.size() || scales.size() != assets.size()) {
        throw InvalidArgument("compose_multi: positions and scales must match the asset count");
    }
    for (const auto& a : assets) {
        if (a.direction_bin != assets.front().direction_bin) {
            throw DirectionMismatch("compose_multi: assets have shadow directions " +
                                    std::to_string(assets.front().direction_bin) + " and " +
                                    std::to_string(a.direction_bin));
        }
    }
    if (!bg.flat_region.same_extent(bg.image)) {
        throw InvalidInput("compose: flat region does not match the background size");
    }

    std::vector<ForegroundAsset> scaled;
    scaled.reserve(assets.size());
    for (std::size_t i = 0; i < assets.size(); ++i) {
        scaled.push_back(scale_asset(assets[i], scales[i]));
        check_placement(bg, scaled.back(), positions[i].first, positions[i].second);
    }

    std::vector<std::size_t> order(assets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return positions[a].first + footprint_bottom(scaled[a]) <
               positions[b].first + footprint_bottom(scaled[b]);
    });

    CompositeSample out;
    out.composite = bg.image;
    out.ground_truth = bg.image;
    out.object_mask = Mask(bg.image.height(), bg.image.width());
    out.object_effect_mask = Mask(bg.image.height(), bg.image.width());
    out.background_id = bg.id;
    for (std::size_t i : order) {
        blend_into(out, scaled[i], positions[i].first, positions[i].second);
    }
    for (std::size_t i = 0; i < assets.size(); ++i) {
        out.provenance.push_back(
            {assets[i].id, static_cast<int>(i), positions[i].first, positions[i].second, scales[i]});
    }
    return out;
}

namespace {

struct Draw {
    int row = 0;
    int col = 0;
    double scale = 1.0;
};

std::optional<Draw> draw_placement(const BackgroundScene& bg, const ForegroundAsset& asset,
                                   const SynthConfig& cfg, Rng& rng) {
    for (int attempt = 0; attempt < cfg.placement_attempts; ++attempt) {
        const double scale = rng.uniform(cfg.min_scale, cfg.max_scale);
        const int h = scaled_extent(asset.height(), scale);
        const int w = scaled_extent(asset.width(), scale);
        if (h > bg.image.height() || w > bg.image.width()) continue;
        const int row = rng.uniform_int(0, bg.image.height() - h);
        const int col = rng.uniform_int(0, bg.image.width() - w);
        try {
            check_placement(bg, scale_asset(asset, scale), row, col);
        } catch (const PlacementError&) {
            continue;
        }
        return Draw{row, col, scale};
    }
    return std::nullopt;
}

}  // namespace

std::vector<CompositeSample> synth_dataset(const std::vector<BackgroundScene>& bgs,
                                           const std::vector<ForegroundAsset>& assets, int n,
                                           const SynthConfig& cfg) {
    if (n < 0) throw InvalidArgument("synth_dataset: n must be non-negative");
    if (n == 0) return {};
    if (bgs.empty() || assets.empty()) throw InvalidArgument("synth_dataset: empty background or asset pool");
    if (!(cfg.multi_prob >= 0.0 && cfg.multi_prob <= 1.0)) {
        throw InvalidArgument("synth_dataset: multi_prob must lie in [0,1]");
    }

    std::map<int, std::vector<int>> by_bin;
    for (int i = 0; i < static_cast<int>(assets.size()); ++i) {
        by_bin[assets[static_cast<std::size_t>(i)].direction_bin].push_back(i);
    }

    std::vector<std::optional<CompositeSample>> slots(static_cast<std::size_t>(n));
    parallel_for(slots.size(), cfg.workers, [&](std::size_t index) {
        Rng rng = Rng::derive(cfg.seed, index);
        const auto& bg = bgs[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(bgs.size()) - 1))];
        const int anchor = rng.uniform_int(0, static_cast<int>(assets.size()) - 1);
        std::vector<int> chosen{anchor};
        if (rng.bernoulli(cfg.multi_prob)) {
            const auto& group = by_bin.at(assets[static_cast<std::size_t>(anchor)].direction_bin);
            const int want = rng.uniform_int(cfg.min_objects, cfg.max_objects);
            if (group.size() >= 2) {
                std::vector<int> pool;
                for (int g : group)
                    if (g != anchor) pool.push_back(g);
                while (static_cast<int>(chosen.size()) < want && !pool.empty()) {
                    const int k = rng.uniform_int(0, static_cast<int>(pool.size()) - 1);
                    chosen.push_back(pool[static_cast<std::size_t>(k)]);
                    pool.erase(pool.begin() + k);
                }
            }
        }

        std::vector<ForegroundAsset> picked;
        std::vector<std::pair<int, int>> positions;
        std::vector<double> scales;
        for (int a : chosen) {
            const auto& asset = assets[static_cast<std::size_t>(a)];
            const auto draw = draw_placement(bg, asset, cfg, rng);
            if (!draw) {
                std::cerr << "{\"level\":\"warning\",\"event\":\"placement_failed\",\"sample\":"
                          << index << ",\"asset\":\"" << asset.id << "\"}\n";
                return;
            }
            picked.push_back(asset);
            positions.emplace_back(draw->row, draw->col);
            scales.push_back(draw->scale);
        }
        CompositeSample s = compose_multi(bg, picked, positions, scales);
        for (std::size_t i = 0; i < chosen.size(); ++i) s.provenance[i].asset_index = chosen[i];
        slots[index] = std::move(s);
    });

    std::vector<CompositeSample> out;
    for (auto& s : slots)
        if (s) out.push_back(std::move(*s));
    return out;
}

}  // namespace objclear
