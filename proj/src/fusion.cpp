#include "objclear/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "objclear/imaging.hpp"

namespace objclear {

double FusionConfig::resolved_sigma(int out_h, int out_w) const {
    if (blur_sigma >= 0.0) return blur_sigma;
    return std::max(out_h, out_w) / 32.0;
}

Mask attention_to_mask(const Mask& slice, int out_h, int out_w, const FusionConfig& cfg) {
    if (out_h < 1 || out_w < 1) throw InvalidArgument("attention_to_mask: zero-size target");
    Mask floored = slice;
    for (double& v : floored.values()) {
        if (!std::isfinite(v)) throw NumericError("attention_to_mask: non-finite attention value");
        if (v < cfg.floor) v = 0.0;
    }
    Mask up = resample(floored, out_h, out_w, ResampleMode::Bilinear);
    Mask soft = gaussian_blur(up, cfg.resolved_sigma(out_h, out_w));
    const double peak = *std::max_element(soft.values().begin(), soft.values().end());
    if (peak <= 0.0) return Mask(out_h, out_w);
    for (double& v : soft.values()) v = std::clamp(v / peak, 0.0, 1.0);
    return soft;
}

Image fuse(const Image& original, const Image& generated, const Mask& soft_mask) {
    if (!original.same_extent(generated) || !original.same_extent(soft_mask)) {
        throw InvalidArgument("fuse: original, generated and mask differ in size");
    }
    Image out(original.height(), original.width());
    for (int r = 0; r < out.height(); ++r)
        for (int c = 0; c < out.width(); ++c) {
            const double m = soft_mask.at(r, c);
            for (int ch = 0; ch < Image::kChannels; ++ch) {
                // Endpoints copy exactly; the interior form returns o unchanged when g == o.
                if (m == 0.0) {
                    out.at(r, c, ch) = original.at(r, c, ch);
                } else if (m == 1.0) {
                    out.at(r, c, ch) = generated.at(r, c, ch);
                } else {
                    const double o = original.at(r, c, ch);
                    out.at(r, c, ch) = o + m * (generated.at(r, c, ch) - o);
                }
            }
        }
    return out;
}

}  // namespace objclear
