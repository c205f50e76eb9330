#include "objclear/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace objclear {

std::vector<double> gaussian_kernel(double sigma) {
    if (!std::isfinite(sigma) || sigma <= 0.0) {
        throw InvalidArgument("gaussian_kernel: sigma must be finite and positive");
    }
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

Raster gaussian_blur(const Raster& img, double sigma) {
    if (!std::isfinite(sigma) || sigma < 0.0) {
        throw InvalidArgument("gaussian_blur: sigma must be finite and non-negative");
    }
    if (sigma == 0.0) return img;

    const auto k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    const int h = img.height(), w = img.width(), nc = img.channels();

    Raster tmp(h, w, nc);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < nc; ++ch) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[static_cast<std::size_t>(i + radius)] * img.clamped(r, c + i, ch);
                tmp.at(r, c, ch) = acc;
            }

    // Unit-sum kernel: the output stays within the input's value range up to
    // rounding, which the final clamp removes.
    const auto [lo_it, hi_it] = std::minmax_element(img.values().begin(), img.values().end());
    const double lo = *lo_it, hi = *hi_it;
    Raster out(h, w, nc);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < nc; ++ch) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[static_cast<std::size_t>(i + radius)] * tmp.clamped(r + i, c, ch);
                out.at(r, c, ch) = std::clamp(acc, lo, hi);
            }
    return out;
}

Mask morphology(const Mask& mask, int radius, MorphMode mode) {
    if (radius < 0) throw InvalidArgument("morphology: radius must be non-negative");
    if (!mask.is_binary()) throw InvalidArgument("morphology: mask must be binary");
    if (radius == 0) return mask;

    const int h = mask.height(), w = mask.width();
    const bool dilate = mode == MorphMode::Dilate;
    // Skipping out-of-image samples is the same as clamp-to-edge here: the
    // nearest edge pixel is always inside the window.
    auto pass = [&](const Mask& src, bool horizontal) {
        Mask out(h, w);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                double v = dilate ? 0.0 : 1.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int rr = horizontal ? r : r + i;
                    const int cc = horizontal ? c + i : c;
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                    v = dilate ? std::max(v, src.at(rr, cc)) : std::min(v, src.at(rr, cc));
                }
                out.at(r, c) = v;
            }
        return out;
    };
    return pass(pass(mask, true), false);
}

namespace {

struct Tap {
    int index;
    double weight;
};

// Per-output-coordinate input taps for one axis.
std::vector<std::vector<Tap>> axis_taps(int in, int out, ResampleMode mode) {
    std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        auto& t = taps[static_cast<std::size_t>(o)];
        if (mode == ResampleMode::Bilinear) {
            double src = (o + 0.5) * scale - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(in - 1));
            const int i0 = static_cast<int>(std::floor(src));
            const int i1 = std::min(i0 + 1, in - 1);
            const double f = src - i0;
            if (f == 0.0 || i1 == i0) {
                t.push_back({i0, 1.0});
            } else {
                t.push_back({i0, 1.0 - f});
                t.push_back({i1, f});
            }
        } else {
            const double lo = o * scale;
            const double hi = (o + 1) * scale;
            for (int i = static_cast<int>(std::floor(lo)); i < in && i < hi; ++i) {
                const double cover = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
                if (cover > 0.0) t.push_back({i, cover / scale});
            }
        }
    }
    return taps;
}

}  // namespace

Raster resample(const Raster& img, int new_height, int new_width, ResampleMode mode) {
    if (new_height < 1 || new_width < 1) {
        throw InvalidArgument("resample: target dimensions must be >= 1, got " +
                              std::to_string(new_height) + "x" + std::to_string(new_width));
    }
    if (new_height == img.height() && new_width == img.width()) return img;

    const auto rows = axis_taps(img.height(), new_height, mode);
    const auto cols = axis_taps(img.width(), new_width, mode);
    const int nc = img.channels();
    Raster out(new_height, new_width, nc);
    for (int r = 0; r < new_height; ++r)
        for (int c = 0; c < new_width; ++c)
            for (int ch = 0; ch < nc; ++ch) {
                double acc = 0.0, wsum = 0.0;
                double lo = img.at(rows[r][0].index, cols[c][0].index, ch), hi = lo;
                for (const Tap& tr : rows[static_cast<std::size_t>(r)])
                    for (const Tap& tc : cols[static_cast<std::size_t>(c)]) {
                        const double v = img.at(tr.index, tc.index, ch);
                        const double w = tr.weight * tc.weight;
                        acc += w * v;
                        wsum += w;
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                    }
                // Convex combination: keep rounding from leaving the input range.
                out.at(r, c, ch) = std::clamp(acc / wsum, lo, hi);
            }
    return out;
}

}  // namespace objclear
