#include <cmath>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "objclear/annotator.hpp"
#include "objclear/corpus.hpp"
#include "objclear/error.hpp"
#include "objclear/toynet.hpp"
#include "support.hpp"

using namespace objclear;
using namespace objclear::toynet;

namespace {

std::vector<TrainItem> probe_items(std::uint64_t seed, int n) {
    std::vector<TrainItem> items;
    for (const ProceduralScene& s : render_corpus(seed, n)) items.push_back(to_train_item(s, s.object_effect_mask));
    return items;
}

AttentionMap slice_map(const std::vector<double>& slice) {
    AttentionMap a;
    for (int p = 0; p < kPositions; ++p) {
        const double v = slice[static_cast<std::size_t>(p)];
        a.weights[static_cast<std::size_t>(p * kTokens + kTokens - 1)] = v;
        for (int t = 0; t < kTokens - 1; ++t)
            a.weights[static_cast<std::size_t>(p * kTokens + t)] = (1.0 - v) / (kTokens - 1);
    }
    return a;
}

// Left half of the frame is foreground.
Mask left_half() {
    Mask m(kImageSide, kImageSide);
    for (int r = 0; r < kImageSide; ++r)
        for (int c = 0; c < kImageSide / 2; ++c) m.at(r, c) = 1.0;
    return m;
}

}  // namespace

TEST_CASE("noise schedule") {
    const NoiseSchedule s;
    CHECK(s.at(1) == doctest::Approx(0.9999).epsilon(1e-15));
    CHECK(s.at(kLevels) == doctest::Approx(0.02).epsilon(1e-15));
    for (int t = 1; t < kLevels; ++t) {
        CHECK(s.at(t) > s.at(t + 1));
        CHECK(s.at(t + 1) > 0.0);
    }
    CHECK_THROWS_AS(s.at(0), InvalidArgument);
    CHECK_THROWS_AS(s.at(kLevels + 1), InvalidArgument);
}

TEST_CASE("parameter layout") {
    const Params p;
    CHECK(p.get("enc1.weight").shape == std::vector<int>{16, 7, 3, 3});
    CHECK(p.get("enc2.weight").shape == std::vector<int>{32, 16, 3, 3});
    CHECK(p.get("obj1.weight").shape == std::vector<int>{8, 3, 3, 3});
    CHECK(p.get("obj2.weight").shape == std::vector<int>{16, 8, 3, 3});
    CHECK(p.get("proj1.weight").shape == std::vector<int>{16, 32});
    CHECK(p.get("proj2.weight").shape == std::vector<int>{32, 32});
    CHECK(p.get("text.tokens").shape == std::vector<int>{4, 32});
    CHECK(p.get("dec2.weight").shape == std::vector<int>{3, 16, 3, 3});
    std::size_t total = 0;
    for (const Tensor& t : p.tensors()) total += t.data.size();
    CHECK(total == p.scalar_count());
    CHECK(Params::initialize(5) == Params::initialize(5));
    CHECK_FALSE(Params::initialize(5) == Params::initialize(6));
    CHECK_THROWS_AS(p.get("missing"), InvalidArgument);
}

TEST_CASE("guidance tokens") {
    const Params p = Params::initialize(1);
    const ProceduralScene s = render_scene(2, 0);
    const Guidance g = build_guidance(s.pair.input, s.pair.object_mask, p, false);
    const auto& text = p.get("text.tokens").data;
    for (std::size_t i = 0; i < text.size(); ++i) CHECK(g.tokens[i] == text[i]);

    const Guidance dropped = build_guidance(s.pair.input, s.pair.object_mask, p, true);
    CHECK(dropped.dropped);
    const auto& null_token = p.get("null.token").data;
    for (int d = 0; d < kModelDim; ++d)
        CHECK(dropped.tokens[static_cast<std::size_t>(kTextTokens * kModelDim + d)] == null_token[static_cast<std::size_t>(d)]);

    const Mask empty(kImageSide, kImageSide);
    const Guidance z1 = build_guidance(s.pair.input, empty, p, false);
    const Guidance z2 = build_guidance(render_scene(2, 1).pair.input, empty, p, false);
    CHECK(z1.tokens == z2.tokens);
    CHECK(build_guidance(s.pair.input, s.pair.object_mask, p, false).tokens == g.tokens);
    CHECK_THROWS_AS(build_guidance(Image(16, 16), Mask(16, 16), p, false), InvalidArgument);
}

TEST_CASE("forward shapes and attention rows") {
    const Params p = Params::initialize(3);
    const ProceduralScene s = render_scene(4, 0);
    Rng rng(8);
    Image z(kImageSide, kImageSide);
    for (double& v : z.values()) v = rng.normal();
    Guidance g = build_guidance(s.pair.input, s.pair.object_mask, p, false);
    const ForwardResult r = forward(z, s.pair.input, s.pair.object_mask, 10, g, p);
    CHECK(r.x0_pred.height() == kImageSide);
    CHECK(r.x0_pred.width() == kImageSide);
    CHECK(r.attn.weights.size() == static_cast<std::size_t>(kPositions * kTokens));
    CHECK(r.attn.max_row_deviation() < 1e-5);
    for (double w : r.attn.weights) CHECK(w >= 0.0);

    for (double& v : g.tokens) v *= 2.0;
    const ForwardResult r2 = forward(z, s.pair.input, s.pair.object_mask, 10, g, p);
    CHECK(r2.attn.max_row_deviation() < 1e-5);
    CHECK(testing::max_abs_diff(Mask(r.attn.object_slice()), Mask(r2.attn.object_slice())) > 0.0);

    CHECK_THROWS_AS(forward(z, s.pair.input, s.pair.object_mask, 0, g, p), InvalidArgument);
    z.at(0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(forward(z, s.pair.input, s.pair.object_mask, 3, g, p), NumericError);
}

TEST_CASE("mask loss extremes") {
    const Mask fg = left_half();
    const Mask grid = grid_mask(fg);
    std::vector<double> sep(kPositions), inv(kPositions), flat(kPositions, 0.3);
    for (int p = 0; p < kPositions; ++p) {
        const bool on = grid.at(p / kGridSide, p % kGridSide) > 0.5;
        sep[static_cast<std::size_t>(p)] = on ? 1.0 : 0.0;
        inv[static_cast<std::size_t>(p)] = on ? 0.0 : 1.0;
    }
    CHECK(std::abs(mask_loss(slice_map(sep), fg).value + 1.0) <= 1e-9);
    CHECK(std::abs(mask_loss(slice_map(flat), fg).value) <= 1e-9);
    CHECK(std::abs(mask_loss(slice_map(inv), fg).value - 1.0) <= 1e-9);

    const MaskLossResult degenerate = mask_loss(slice_map(sep), Mask(kImageSide, kImageSide, 1.0));
    CHECK(degenerate.degenerate);
    CHECK(degenerate.value == 0.0);
}

TEST_CASE("grid mask is area mean then threshold") {
    Mask m(kImageSide, kImageSide);
    // 8 of 16 pixels in cell (0,0) and 7 of 16 in cell (0,1)
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) m.at(r, c) = 1.0;
    for (int i = 0; i < 7; ++i) m.at(i / 4, 4 + i % 4) = 1.0;
    const Mask g = grid_mask(m);
    CHECK(g.at(0, 0) == 1.0);
    CHECK(g.at(0, 1) == 0.0);
    CHECK(g.count_on() == 1);
}

TEST_CASE("loss components add up") {
    const Params p = Params::initialize(4);
    const auto items = probe_items(31, 4);
    TrainConfig cfg;
    cfg.seed = 2;
    Trainer tr(p, cfg);
    const auto draws = tr.draw_items(items.size());
    for (double lambda : {0.0, 0.1, 2.5}) {
        Params grads;
        const LossReport r = loss_and_grad(p, items, draws, lambda, &grads);
        CHECK(std::abs(r.total - (r.mse + lambda * r.mask_loss)) <= 1e-9);
    }
}

TEST_CASE("lambda zero ignores M_fg") {
    const Params p = Params::initialize(4);
    auto items = probe_items(32, 3);
    TrainConfig cfg;
    cfg.seed = 3;
    Trainer tr(p, cfg);
    const auto draws = tr.draw_items(items.size());
    Params g1, g2;
    loss_and_grad(p, items, draws, 0.0, &g1);
    for (auto& it : items) it.object_effect_mask = left_half();
    loss_and_grad(p, items, draws, 0.0, &g2);
    CHECK(g1 == g2);

    Params g3;
    loss_and_grad(p, items, draws, 0.1, &g3);
    CHECK_FALSE(g3 == g2);
}

TEST_CASE("training is deterministic across worker counts") {
    const auto items = probe_items(40, 16);
    TrainConfig cfg;
    cfg.seed = 9;
    cfg.batch_size = 4;
    cfg.learning_rate = 1e-2;
    Trainer a(Params::initialize(1), cfg);
    cfg.workers = 4;
    Trainer b(Params::initialize(1), cfg);
    const auto ra = a.train(items);
    const auto rb = b.train(items);
    CHECK(a.params() == b.params());
    REQUIRE(ra.size() == 4);
    for (std::size_t i = 0; i < ra.size(); ++i) CHECK(ra[i].total == rb[i].total);
    CHECK(a.steps_taken() == 4);
}

TEST_CASE("gradient check passes and catches a corrupted gradient") {
    const Params p = Params::initialize(12);
    const auto items = probe_items(50, 2);
    TrainConfig cfg;
    cfg.seed = 1;
    Trainer tr(p, cfg);
    const auto draws = tr.draw_items(items.size());
    const GradientCheckResult ok = gradient_check(p, items, draws, 0.1, 40, 7);
    CHECK(ok.checked.size() == 40);
    CHECK(ok.max_rel_error < 1e-3);

    const GradientCheckResult bad =
        gradient_check(p, items, draws, 0.1, 40, 7, 1e-4, [&](Params& g) {
            for (std::size_t idx : ok.checked) g.scalar(idx) *= 1.1;
        });
    CHECK(bad.max_rel_error > 1e-3);
}

TEST_CASE("inference") {
    const Params p = Params::initialize(2);
    const ProceduralScene s = render_scene(60, 0);
    const InferResult a = infer(s.pair.input, s.pair.object_mask, p, 20, 1.0, 5);
    const InferResult b = infer(s.pair.input, s.pair.object_mask, p, 20, 1.0, 5);
    CHECK(a.output == b.output);
    CHECK(a.null_evaluations == 0);
    CHECK(a.attn_steps.size() == 20);
    CHECK(a.attn_final.weights == a.attn_steps.back().weights);
    for (double v : a.output.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    for (const AttentionMap& m : a.attn_steps) CHECK(m.max_row_deviation() < 1e-5);

    const InferResult guided = infer(s.pair.input, s.pair.object_mask, p, 20, 7.5, 5);
    CHECK(guided.null_evaluations == 20);
    CHECK_FALSE(guided.output == a.output);

    CHECK(infer(s.pair.input, s.pair.object_mask, p, 5, 1.0, 5).attn_steps.size() == 5);
    CHECK_THROWS_AS(infer(s.pair.input, s.pair.object_mask, p, 20, 0.5, 5), InvalidArgument);
    Params broken = p;
    broken.scalar(0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(infer(s.pair.input, s.pair.object_mask, broken, 20, 1.0, 5), NumericError);
}

TEST_CASE("attention scores use the upsampled slice") {
    std::vector<double> slice(kPositions, 0.0);
    for (int r = 0; r < kGridSide; ++r)
        for (int c = 0; c < kGridSide / 2; ++c) slice[static_cast<std::size_t>(r * kGridSide + c)] = 1.0;
    const MaskScores s = attention_scores(slice_map(slice), left_half());
    CHECK(s.recall == doctest::Approx(1.0));
    CHECK(s.precision == doctest::Approx(1.0));
    const MaskScores none = attention_scores(slice_map(std::vector<double>(kPositions, 0.0)), left_half());
    CHECK(none.recall == 0.0);
}

TEST_CASE("checkpoint round trip") {
    const auto dir = testing::scratch_dir("ckpt");
    const Params p = Params::initialize(77);
    TrainConfig cfg;
    cfg.lambda_mask = 0.25;
    cfg.seed = 77;
    save_checkpoint(dir / "a.bin", p, {cfg, 77, 12});
    CheckpointMeta meta;
    const Params q = load_checkpoint(dir / "a.bin", &meta);
    CHECK(meta.steps == 12);
    CHECK(meta.init_seed == 77);
    CHECK(meta.config.lambda_mask == 0.25);
    for (std::size_t i = 0; i < p.scalar_count(); ++i)
        CHECK(q.scalar(i) == static_cast<double>(static_cast<float>(p.scalar(i))));

    save_checkpoint(dir / "b.bin", q, {cfg, 77, 12});
    CHECK(load_checkpoint(dir / "b.bin") == q);

    {
        std::ofstream junk(dir / "junk.bin", std::ios::binary);
        junk << "NOTACKPT";
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "junk.bin"), IoError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), IoError);
}
