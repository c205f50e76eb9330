#include <cmath>

#include "doctest.h"
#include "objclear/annotator.hpp"
#include "objclear/corpus.hpp"
#include "objclear/error.hpp"
#include "objclear/synthesizer.hpp"
#include "support.hpp"

using namespace objclear;

namespace {

// Square object with a one-pixel shadow strip to its right.
ForegroundAsset block_asset(int side, int bin, double alpha_effect = 0.4, std::string id = "a") {
    ForegroundAsset a;
    a.id = std::move(id);
    a.direction_bin = bin;
    a.color = Image(side, side + 1);
    a.alpha = AlphaMap(side, side + 1);
    a.object_mask = Mask(side, side + 1);
    a.effect_mask = Mask(side, side + 1);
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            a.object_mask.at(r, c) = 1.0;
            for (int ch = 0; ch < 3; ++ch) {
                a.color.at(r, c, ch) = 0.2 + 0.1 * ch;
                a.alpha.at(r, c, ch) = 1.0;
            }
        }
        a.effect_mask.at(r, side) = 1.0;
        for (int ch = 0; ch < 3; ++ch) a.alpha.at(r, side, ch) = alpha_effect;
    }
    return a;
}

BackgroundScene gray_scene(int h, int w) { return BackgroundScene::from_image(Image(h, w, 0.6), "gray"); }

}  // namespace

TEST_CASE("placement from labels and depth") {
    BackgroundScene s = gray_scene(8, 10);
    s.flat_region = Mask();
    s.semantic_labels = LabelMap{8, 10, std::vector<int>(80, 3)};
    s.depth = Mask(8, 10, 2.0);
    CHECK(select_placement(s, kDefaultFlatClasses, 1.0).count_on() == 80);
    CHECK_FALSE(select_placement(s, {}, 1.0).any());

    // depth step of 10 units between columns 4 and 5
    for (int r = 0; r < 8; ++r)
        for (int c = 5; c < 10; ++c) s.depth->at(r, c) = 12.0;
    const Mask m = select_placement(s, kDefaultFlatClasses, 1.0);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 10; ++c) {
            const int cl = std::max(c - 1, 0), cr = std::min(c + 1, 9);
            const int ru = std::max(r - 1, 0), rd = std::min(r + 1, 7);
            const double gx = (s.depth->at(r, cr) - s.depth->at(r, cl)) / 2.0;
            const double gy = (s.depth->at(rd, c) - s.depth->at(ru, c)) / 2.0;
            CHECK(m.at(r, c) == (std::hypot(gx, gy) <= 1.0 ? 1.0 : 0.0));
        }
    CHECK(m.at(0, 4) == 0.0);
    CHECK(m.at(0, 5) == 0.0);
    CHECK(m.at(0, 0) == 1.0);
}

TEST_CASE("placement without maps") {
    BackgroundScene s = gray_scene(4, 4);
    CHECK(select_placement(s, kDefaultFlatClasses, 1.0) == s.flat_region);
    s.flat_region = Mask();
    CHECK_THROWS_AS(select_placement(s, kDefaultFlatClasses, 1.0), InvalidInput);
}

TEST_CASE("compose blend identities") {
    const BackgroundScene bg = gray_scene(12, 12);
    ForegroundAsset a = block_asset(3, 0, 0.0);
    const CompositeSample out = compose(bg, a, 2, 4, 1.0);
    for (int r = 0; r < 12; ++r)
        for (int c = 0; c < 12; ++c) {
            const bool obj = r >= 2 && r < 5 && c >= 4 && c < 7;
            for (int ch = 0; ch < 3; ++ch)
                CHECK(out.composite.at(r, c, ch) == (obj ? 0.2 + 0.1 * ch : 0.6));
        }
    CHECK(out.ground_truth == bg.image);
    CHECK(out.object_mask.count_on() == 9);
    CHECK(out.object_effect_mask.count_on() == 12);
    REQUIRE(out.provenance.size() == 1);
    CHECK(out.provenance[0].row == 2);
    CHECK(out.provenance[0].col == 4);
}

TEST_CASE("compose errors") {
    BackgroundScene bg = gray_scene(10, 10);
    const ForegroundAsset a = block_asset(3, 0);
    CHECK_THROWS_AS(compose(bg, a, 8, 0, 1.0), PlacementError);
    CHECK_THROWS_AS(compose(bg, a, -1, 0, 1.0), PlacementError);
    bg.flat_region = Mask(10, 10);
    CHECK_THROWS_AS(compose(bg, a, 0, 0, 1.0), PlacementError);
}

TEST_CASE("composite equals background outside M_fg") {
    Rng rng(2);
    BackgroundScene bg = BackgroundScene::from_image(testing::random_image(rng, 24, 24));
    for (double scale : {0.5, 0.8, 1.0, 1.3}) {
        const ForegroundAsset a = block_asset(6, 1, -0.3);
        const CompositeSample out = compose(bg, a, 5, 5, scale);
        for (int r = 0; r < 24; ++r)
            for (int c = 0; c < 24; ++c)
                if (out.object_effect_mask.at(r, c) < 0.5)
                    for (int ch = 0; ch < 3; ++ch) CHECK(out.composite.at(r, c, ch) == bg.image.at(r, c, ch));
    }
}

TEST_CASE("multi-object composition") {
    const BackgroundScene bg = gray_scene(20, 20);
    const ForegroundAsset a = block_asset(3, 2, 0.4, "a");
    const ForegroundAsset b = block_asset(4, 2, 0.5, "b");

    SUBCASE("single element matches compose") {
        CHECK(compose_multi(bg, {a}, {{3, 3}}, {1.0}).composite == compose(bg, a, 3, 3, 1.0).composite);
    }
    SUBCASE("disjoint assets equal sequential blends in either order") {
        const CompositeSample both = compose_multi(bg, {a, b}, {{1, 1}, {10, 10}}, {1.0, 1.0});
        const CompositeSample first = compose(bg, a, 1, 1, 1.0);
        BackgroundScene mid = BackgroundScene::from_image(first.composite);
        const CompositeSample seq = compose(mid, b, 10, 10, 1.0);
        CHECK(both.composite == seq.composite);
        CHECK(compose_multi(bg, {b, a}, {{10, 10}, {1, 1}}, {1.0, 1.0}).composite == both.composite);
        CHECK(both.object_mask.count_on() == 9 + 16);
        CHECK(both.provenance.size() == 2);
    }
    SUBCASE("nearer object is drawn last") {
        // b's footprint ends lower (row 2+4-1 = 5 > 0+3-1 = 2), so it covers the overlap.
        const CompositeSample out = compose_multi(bg, {b, a}, {{2, 1}, {0, 1}}, {1.0, 1.0});
        CHECK(out.composite.at(2, 1, 0) == doctest::Approx(0.2));
        const CompositeSample flipped = compose_multi(bg, {a, b}, {{0, 1}, {2, 1}}, {1.0, 1.0});
        CHECK(flipped.composite == out.composite);
    }
    SUBCASE("mixed bins") {
        const ForegroundAsset c = block_asset(3, 3);
        CHECK_THROWS_AS(compose_multi(bg, {a, c}, {{0, 0}, {10, 10}}, {1.0, 1.0}), DirectionMismatch);
    }
}

TEST_CASE("scaled asset keeps alpha invariants") {
    const ForegroundAsset a = block_asset(5, 0, 0.4);
    for (double scale : {0.5, 0.7, 1.5}) {
        const ForegroundAsset s = scale_asset(a, scale);
        CHECK(s.height() == static_cast<int>(std::lround(5 * scale)));
        const Mask fg = s.object_effect_mask();
        for (int r = 0; r < s.height(); ++r)
            for (int c = 0; c < s.width(); ++c)
                for (int ch = 0; ch < 3; ++ch) {
                    if (s.object_mask.at(r, c) > 0.5) CHECK(s.alpha.at(r, c, ch) == 1.0);
                    if (fg.at(r, c) < 0.5) CHECK(s.alpha.at(r, c, ch) == 0.0);
                    CHECK(std::abs(s.alpha.at(r, c, ch)) <= 1.0);
                }
    }
}

TEST_CASE("dataset synthesis") {
    std::vector<BackgroundScene> bgs{gray_scene(48, 48), gray_scene(40, 56)};
    std::vector<ForegroundAsset> assets;
    for (int i = 0; i < 6; ++i) assets.push_back(block_asset(4 + i % 3, i % 2, 0.3, "asset" + std::to_string(i)));

    SynthConfig cfg;
    cfg.seed = 99;
    CHECK(synth_dataset(bgs, assets, 0, cfg).empty());

    const auto first = synth_dataset(bgs, assets, 100, cfg);
    REQUIRE(first.size() == 100);
    cfg.workers = 4;
    const auto second = synth_dataset(bgs, assets, 100, cfg);
    int multi = 0;
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK(first[i].composite == second[i].composite);
        CHECK(first[i].object_effect_mask == second[i].object_effect_mask);
        if (first[i].provenance.size() > 1) {
            ++multi;
            CHECK(first[i].provenance.size() <= 4);
            const int bin = assets[static_cast<std::size_t>(first[i].provenance[0].asset_index)].direction_bin;
            for (const Placement& p : first[i].provenance) {
                CHECK(assets[static_cast<std::size_t>(p.asset_index)].direction_bin == bin);
                CHECK(p.scale >= 0.5);
                CHECK(p.scale <= 1.5);
            }
        }
    }
    CHECK(multi >= 10);
    CHECK(multi <= 50);
    CHECK_THROWS_AS(synth_dataset({}, assets, 1, cfg), InvalidArgument);
}

TEST_CASE("unplaceable samples are skipped") {
    BackgroundScene bg = gray_scene(6, 6);
    std::vector<ForegroundAsset> assets{block_asset(10, 0)};
    SynthConfig cfg;
    cfg.min_scale = cfg.max_scale = 1.0;
    CHECK(synth_dataset({bg}, assets, 3, cfg).empty());
}
