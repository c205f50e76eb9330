#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "objclear/raster.hpp"

namespace objclear {

/// Reported PSNR for identical inputs.
inline constexpr double kPsnrCap = 99.0;

/// Peak 1.0 on the [0,1] scale; MSE over all pixels and channels.
double psnr(const Image& a, const Image& b);

/// PSNR over pixels where fg_mask is 0. Throws UndefinedRegion when the mask
/// leaves no background pixel.
double psnr_bg(const Image& a, const Image& b, const Mask& fg_mask);

struct MaskScores {
    double recall = 0.0;
    double precision = 0.0;
    double iou = 0.0;
};

/// Binarizes `pred` (values >= threshold count as on) and scores it against
/// `gt`. Empty gt gives recall 1, empty pred gives precision 1, and an empty
/// union gives IoU 1.
MaskScores mask_metrics(const Mask& pred, const Mask& gt, double threshold = 0.5);

/// Per-pixel max-channel |a - b|.
Mask abs_diff_map(const Image& a, const Image& b);

/// Black -> red -> yellow -> white ramp over [0,1].
Image heat_colormap(const Mask& values);

struct SampleMetrics {
    std::string id;
    double psnr = 0.0;
    double psnr_bg = 0.0;
    MaskScores mask;
};

struct MetricReport {
    std::vector<SampleMetrics> samples;
    double mean_psnr = 0.0;
    double mean_psnr_bg = 0.0;
    MaskScores mean_mask;

    void finalize();
    /// Deterministic JSON rendering (fixed key order, 17 significant digits).
    std::string to_json(bool include_samples = true) const;
    nlohmann::ordered_json to_json_value(bool include_samples = true) const;
};

}  // namespace objclear
