#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "objclear/annotator.hpp"
#include "objclear/raster.hpp"

namespace objclear {

/// Integer label map, row-major.
struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<int> labels;

    int at(int row, int col) const { return labels[static_cast<std::size_t>(row) * width + col]; }
};

struct BackgroundScene {
    std::string id;
    Image image;
    /// Eligible placement pixels; same size as image.
    Mask flat_region;
    /// Single-channel non-negative depth.
    std::optional<Mask> depth;
    std::optional<LabelMap> semantic_labels;

    /// Scene whose every pixel is eligible for placement.
    static BackgroundScene from_image(Image img, std::string id = {});
};

struct Placement {
    std::string asset_id;
    int asset_index = -1;
    int row = 0;
    int col = 0;
    double scale = 1.0;
};

struct CompositeSample {
    Image composite;
    Image ground_truth;
    Mask object_mask;
    Mask object_effect_mask;
    std::string background_id;
    std::vector<Placement> provenance;
};

/// ADE20K-150 ids for floor, road, grass and sidewalk.
inline const std::set<int> kDefaultFlatClasses = {3, 6, 9, 11};

/// Eligible-placement mask from the semantic labels and the central-difference
/// depth gradient. Falls back to the scene's flat_region when neither map is
/// present; throws InvalidInput when nothing is available.
Mask select_placement(const BackgroundScene& scene, const std::set<int>& flat_classes,
                      double depth_grad_threshold);

/// Asset layers resampled to round(size * scale) with alpha forced to zero
/// outside the resampled object-effect mask.
ForegroundAsset scale_asset(const ForegroundAsset& asset, double scale);

/// Blend one asset with its top-left corner at (row, col). The scaled object
/// footprint must fit in the frame and lie inside bg.flat_region.
CompositeSample compose(const BackgroundScene& bg, const ForegroundAsset& asset, int row, int col,
                        double scale);

/// Blend 1-4 same-direction assets back to front: placements whose object
/// footprint ends higher in the frame are drawn first.
CompositeSample compose_multi(const BackgroundScene& bg, const std::vector<ForegroundAsset>& assets,
                              const std::vector<std::pair<int, int>>& positions,
                              const std::vector<double>& scales);

struct SynthConfig {
    double multi_prob = 0.3;
    double min_scale = 0.5;
    double max_scale = 1.5;
    int min_objects = 2;
    int max_objects = 4;
    int placement_attempts = 100;
    std::uint64_t seed = 0;
    int workers = 1;
};

/// n samples, each fully determined by (inputs, seed, sample index). Samples
/// whose placement fails after the attempt budget are skipped with a warning
/// on stderr.
std::vector<CompositeSample> synth_dataset(const std::vector<BackgroundScene>& bgs,
                                           const std::vector<ForegroundAsset>& assets, int n,
                                           const SynthConfig& cfg);

}  // namespace objclear
