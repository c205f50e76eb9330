#include "objclear/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "objclear/rng.hpp"

namespace objclear {

ProceduralScene render_scene(std::uint64_t seed, std::uint64_t index, const CorpusConfig& cfg) {
    Rng rng = Rng::derive(seed, index);
    const int n = cfg.side;
    ProceduralScene s;

    Image bg(n, n);
    double base[3];
    for (double& b : base) b = rng.uniform(0.35, 0.95);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            for (int ch = 0; ch < 3; ++ch)
                bg.at(r, c, ch) = std::clamp(
                    base[ch] + rng.uniform(-cfg.background_noise, cfg.background_noise), 0.0, 1.0);

    const int oh = rng.uniform_int(cfg.min_object, cfg.max_object);
    const int ow = rng.uniform_int(cfg.min_object, cfg.max_object);
    const bool ellipse = rng.bernoulli(0.5);
    const int bin = rng.uniform_int(0, 7);
    const int length = rng.uniform_int(cfg.min_shadow_length, cfg.max_shadow_length);
    const double theta = bin * std::numbers::pi / 4.0;
    const double step_c = std::cos(theta);
    const double step_r = -std::sin(theta);  // north is decreasing row
    const int sr = static_cast<int>(std::lround(step_r * length));
    const int sc = static_cast<int>(std::lround(step_c * length));

    // Keep object and shadow inside the frame.
    const int r_lo = std::max(0, -sr), r_hi = n - oh - std::max(0, sr);
    const int c_lo = std::max(0, -sc), c_hi = n - ow - std::max(0, sc);
    const int top = rng.uniform_int(r_lo, r_hi);
    const int left = rng.uniform_int(c_lo, c_hi);

    Mask object(n, n);
    for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
            bool on = true;
            if (ellipse) {
                const double y = (r + 0.5) / oh * 2.0 - 1.0;
                const double x = (c + 0.5) / ow * 2.0 - 1.0;
                on = x * x + y * y <= 1.0;
            }
            if (on) object.at(top + r, left + c) = 1.0;
        }

    Mask shadow(n, n);
    for (int k = 1; k <= length; ++k) {
        const int dr = static_cast<int>(std::lround(step_r * k));
        const int dc = static_cast<int>(std::lround(step_c * k));
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                if (object.at(r, c) > 0.5) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr >= 0 && rr < n && cc >= 0 && cc < n) shadow.at(rr, cc) = 1.0;
                }
    }
    s.effect_mask = mask_and_not(shadow, object);
    s.object_effect_mask = mask_or(object, s.effect_mask);
    s.direction_bin = bin;
    s.shadow_factor = rng.uniform(cfg.min_shadow_factor, cfg.max_shadow_factor);

    double color[3];
    for (double& v : color) v = rng.uniform(0.0, 1.0);
    Image in = bg;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                if (object.at(r, c) > 0.5) {
                    in.at(r, c, ch) = color[ch];
                } else if (s.effect_mask.at(r, c) > 0.5) {
                    in.at(r, c, ch) = bg.at(r, c, ch) * s.shadow_factor;
                }
            }
    s.pair = {std::move(in), std::move(bg), std::move(object)};
    return s;
}

std::vector<ProceduralScene> render_corpus(std::uint64_t seed, int count, const CorpusConfig& cfg) {
    std::vector<ProceduralScene> out;
    out.reserve(static_cast<std::size_t>(std::max(0, count)));
    for (int i = 0; i < count; ++i) out.push_back(render_scene(seed, static_cast<std::uint64_t>(i), cfg));
    return out;
}

toynet::TrainItem to_train_item(const ProceduralScene& scene, const Mask& object_effect_mask) {
    return {scene.pair.input, scene.pair.ground_truth, scene.pair.object_mask, object_effect_mask};
}

}  // namespace objclear
