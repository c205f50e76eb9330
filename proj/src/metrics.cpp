#include "objclear/metrics.hpp"

#include <algorithm>
#include <cmath>


namespace objclear {
namespace {

void require_extent(const Raster& a, const Raster& b, const char* op) {
    if (!a.same_extent(b)) throw InvalidArgument(std::string(op) + ": size mismatch");
}

double psnr_from_mse(double mse) {
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    require_extent(a, b, "psnr");
    auto av = a.values();
    auto bv = b.values();
    double sum = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        sum += d * d;
    }
    return psnr_from_mse(sum / static_cast<double>(av.size()));
}

double psnr_bg(const Image& a, const Image& b, const Mask& fg_mask) {
    require_extent(a, b, "psnr_bg");
    require_extent(a, fg_mask, "psnr_bg");
    double sum = 0.0;
    std::size_t count = 0;
    for (int r = 0; r < a.height(); ++r)
        for (int c = 0; c < a.width(); ++c) {
            if (fg_mask.at(r, c) > 0.5) continue;
            for (int ch = 0; ch < Image::kChannels; ++ch) {
                const double d = a.at(r, c, ch) - b.at(r, c, ch);
                sum += d * d;
            }
            count += Image::kChannels;
        }
    if (count == 0) throw UndefinedRegion("psnr_bg: foreground mask covers the whole image");
    return psnr_from_mse(sum / static_cast<double>(count));
}

MaskScores mask_metrics(const Mask& pred, const Mask& gt, double threshold) {
    require_extent(pred, gt, "mask_metrics");
    std::size_t inter = 0, npred = 0, ngt = 0, uni = 0;
    auto pv = pred.values();
    auto gv = gt.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const bool p = pv[i] >= threshold;
        const bool g = gv[i] > 0.5;
        inter += p && g;
        npred += p;
        ngt += g;
        uni += p || g;
    }
    MaskScores s;
    s.recall = ngt == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(ngt);
    s.precision = npred == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(npred);
    s.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    return s;
}

Mask abs_diff_map(const Image& a, const Image& b) {
    require_extent(a, b, "diff_map");
    Mask out(a.height(), a.width());
    for (int r = 0; r < a.height(); ++r)
        for (int c = 0; c < a.width(); ++c) {
            double d = 0.0;
            for (int ch = 0; ch < Image::kChannels; ++ch)
                d = std::max(d, std::abs(a.at(r, c, ch) - b.at(r, c, ch)));
            out.at(r, c) = d;
        }
    return out;
}

Image heat_colormap(const Mask& values) {
    Image out(values.height(), values.width());
    for (int r = 0; r < values.height(); ++r)
        for (int c = 0; c < values.width(); ++c) {
            const double v = std::clamp(values.at(r, c), 0.0, 1.0);
            out.at(r, c, 0) = std::clamp(3.0 * v, 0.0, 1.0);
            out.at(r, c, 1) = std::clamp(3.0 * v - 1.0, 0.0, 1.0);
            out.at(r, c, 2) = std::clamp(3.0 * v - 2.0, 0.0, 1.0);
        }
    return out;
}

void MetricReport::finalize() {
    mean_psnr = mean_psnr_bg = 0.0;
    mean_mask = {};
    if (samples.empty()) return;
    for (const auto& s : samples) {
        mean_psnr += s.psnr;
        mean_psnr_bg += s.psnr_bg;
        mean_mask.recall += s.mask.recall;
        mean_mask.precision += s.mask.precision;
        mean_mask.iou += s.mask.iou;
    }
    const double n = static_cast<double>(samples.size());
    mean_psnr /= n;
    mean_psnr_bg /= n;
    mean_mask.recall /= n;
    mean_mask.precision /= n;
    mean_mask.iou /= n;
}

std::string MetricReport::to_json(bool include_samples) const {
    return to_json_value(include_samples).dump(2);
}

nlohmann::ordered_json MetricReport::to_json_value(bool include_samples) const {
    using nlohmann::ordered_json;
    auto scores = [](const MaskScores& m) {
        return ordered_json{{"mask_recall", m.recall}, {"mask_precision", m.precision}, {"mask_iou", m.iou}};
    };
    ordered_json j;
    ordered_json agg{{"count", samples.size()}, {"psnr", mean_psnr}, {"psnr_bg", mean_psnr_bg}};
    agg.update(scores(mean_mask));
    j["aggregate"] = agg;
    if (include_samples) {
        ordered_json arr = ordered_json::array();
        for (const auto& s : samples) {
            ordered_json e{{"id", s.id}, {"psnr", s.psnr}, {"psnr_bg", s.psnr_bg}};
            e.update(scores(s.mask));
            arr.push_back(std::move(e));
        }
        j["samples"] = std::move(arr);
    }
    return j;
}

}  // namespace objclear
