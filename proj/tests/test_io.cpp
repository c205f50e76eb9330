#include <fstream>

#include "doctest.h"
#include "objclear/corpus.hpp"
#include "objclear/error.hpp"
#include "objclear/pipeline.hpp"
#include "objclear/png_io.hpp"
#include "support.hpp"

using namespace objclear;
namespace fs = std::filesystem;

namespace {

Image quantized_image(Rng& rng, int h, int w) {
    Image img(h, w);
    for (double& v : img.values()) v = rng.uniform_int(0, 255) / 255.0;
    return img;
}

// Writes the procedural scenes as counterfactual PNGs plus a manifest.
fs::path write_pairs(const fs::path& dir, const std::vector<ProceduralScene>& scenes) {
    std::vector<Json> records;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const std::string stem = "pair" + std::to_string(i);
        write_image_png(dir / (stem + "_in.png"), scenes[i].pair.input);
        write_image_png(dir / (stem + "_gt.png"), scenes[i].pair.ground_truth);
        write_mask_png(dir / (stem + "_mask.png"), scenes[i].pair.object_mask);
        records.push_back({{"id", stem},
                           {"input", stem + "_in.png"},
                           {"ground_truth", stem + "_gt.png"},
                           {"object_mask", stem + "_mask.png"}});
    }
    write_jsonl(dir / "pairs.jsonl", records);
    return dir / "pairs.jsonl";
}

}  // namespace

TEST_CASE("8-bit png round trip") {
    const auto dir = testing::scratch_dir("png8");
    Rng rng(1);
    const Image img = quantized_image(rng, 7, 9);
    write_image_png(dir / "a.png", img);
    CHECK(read_image_png(dir / "a.png") == img);

    Mask m(5, 6);
    for (double& v : m.values()) v = rng.uniform_int(0, 255) / 255.0;
    write_mask_png(dir / "m.png", m);
    CHECK(read_mask_png(dir / "m.png") == m);
    const Mask b = read_binary_mask_png(dir / "m.png");
    for (std::size_t i = 0; i < m.values().size(); ++i)
        CHECK(b.values()[i] == (m.values()[i] * 255.0 >= 127.5 ? 1.0 : 0.0));

    // a colour image read as a mask keeps its first channel
    CHECK(read_mask_png(dir / "a.png").at(2, 3) == img.at(2, 3, 0));
    CHECK_THROWS_AS(read_image_png(dir / "nope.png"), IoError);
}

TEST_CASE("16-bit signed png round trip") {
    const auto dir = testing::scratch_dir("png16");
    Rng rng(2);
    Raster r(6, 5, 3);
    for (double& v : r.values()) v = rng.uniform(-1.0, 1.0);
    r.at(0, 0, 0) = 1.0;
    r.at(0, 0, 1) = -1.0;
    write_signed16_png(dir / "s.png", r);
    const Raster back = read_signed16_png(dir / "s.png");
    CHECK(back.channels() == 3);
    CHECK(testing::max_abs_diff(back, r) <= 1.0 / 65535.0 + 1e-12);
    CHECK(back.at(0, 0, 0) == 1.0);
    CHECK(back.at(0, 0, 1) == -1.0);
}

TEST_CASE("jsonl manifests") {
    const auto dir = testing::scratch_dir("jsonl");
    {
        std::ofstream f(dir / "m.jsonl");
        f << "{\"a\": 1}\n\n{\"a\": 2}\n";
    }
    const auto recs = read_jsonl(dir / "m.jsonl");
    REQUIRE(recs.size() == 2);
    CHECK(recs[1]["a"] == 2);
    {
        std::ofstream f(dir / "bad.jsonl");
        f << "{\"a\": 1}\n{oops\n";
    }
    try {
        read_jsonl(dir / "bad.jsonl");
        FAIL("expected a parse error");
    } catch (const InvalidInput& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    try {
        manifest_path(Json{{"input", "missing.png"}}, "input", dir, 4);
        FAIL("expected a missing-file error");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("missing.png") != std::string::npos);
    }
}

TEST_CASE("annotate manifest writes every layer") {
    const auto dir = testing::scratch_dir("annotate");
    const auto scenes = render_corpus(14, 6);
    const fs::path manifest = write_pairs(dir, scenes);
    const auto out = annotate_manifest(manifest, dir / "out", {}, 3);
    REQUIRE(out.size() == scenes.size());
    CHECK(fs::exists(dir / "out" / "manifest.jsonl"));
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (const char* key : {"effect_mask", "object_effect_mask", "alpha", "color_layer"})
            CHECK(fs::exists(out[i][key].get<std::string>()));
        CHECK(out[i]["direction_bin"] == scenes[i].direction_bin);

        const CounterfactualPair pair{read_image_png(out[i]["input"].get<std::string>()),
                                      read_image_png(out[i]["ground_truth"].get<std::string>()),
                                      read_binary_mask_png(out[i]["object_mask"].get<std::string>())};
        const AnnotationSet a = annotate(pair);
        CHECK(read_binary_mask_png(out[i]["object_effect_mask"].get<std::string>()) == a.object_effect_mask);

        // reloaded asset matches the in-memory extraction up to 16-bit quantization
        const ForegroundAsset mem = extract_alpha(pair, a, 1e-6, std::nullopt);
        const ForegroundAsset disk = load_asset(out[i], dir / "out", i + 1);
        CHECK(disk.origin_row == mem.origin_row);
        CHECK(disk.origin_col == mem.origin_col);
        CHECK(disk.object_mask == mem.object_mask);
        CHECK(testing::max_abs_diff(disk.alpha, mem.alpha) <= 1.0 / 65535.0 + 1e-12);
    }
}

TEST_CASE("annotate reports the missing file") {
    const auto dir = testing::scratch_dir("annotate_missing");
    const fs::path manifest = write_pairs(dir, render_corpus(1, 2));
    fs::remove(dir / "pair1_gt.png");
    try {
        annotate_manifest(manifest, dir / "out", {}, 1);
        FAIL("expected a missing-file error");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("pair1_gt.png") != std::string::npos);
    }
}

TEST_CASE("manual direction bin overrides the estimate") {
    const auto dir = testing::scratch_dir("annotate_bin");
    const fs::path manifest = write_pairs(dir, render_corpus(2, 1));
    auto recs = read_jsonl(manifest);
    recs[0]["direction_bin"] = 6;
    write_jsonl(manifest, recs);
    CHECK(annotate_manifest(manifest, dir / "out", {}, 1)[0]["direction_bin"] == 6);
}

TEST_CASE("backgrounds with labels and depth") {
    const auto dir = testing::scratch_dir("backgrounds");
    Image img(8, 8, 0.5);
    Mask labels(8, 8, 3.0 / 255.0), depth(8, 8, 10.0 / 255.0);
    labels.at(0, 0) = 7.0 / 255.0;
    write_image_png(dir / "bg.png", img);
    write_mask_png(dir / "labels.png", labels);
    write_mask_png(dir / "depth.png", depth);
    const BackgroundScene s =
        load_background(Json{{"image", "bg.png"}, {"labels", "labels.png"}, {"depth", "depth.png"}}, dir, 1, 0.5);
    REQUIRE(s.semantic_labels);
    CHECK(s.semantic_labels->at(0, 0) == 7);
    CHECK(s.semantic_labels->at(4, 4) == 3);
    REQUIRE(s.depth);
    CHECK(s.depth->at(1, 1) == doctest::Approx(5.0));
    const Mask eligible = select_placement(s, kDefaultFlatClasses, 1.0);
    CHECK(eligible.at(0, 0) == 0.0);
    CHECK(eligible.count_on() == 63);

    const BackgroundScene plain = load_background(Json{{"image", "bg.png"}}, dir, 1);
    CHECK(plain.flat_region.count_on() == 64);
}

TEST_CASE("synthesis from manifests") {
    const auto dir = testing::scratch_dir("synth");
    const fs::path manifest = write_pairs(dir, render_corpus(5, 6));
    annotate_manifest(manifest, dir / "assets", {}, 2);

    write_image_png(dir / "bg0.png", Image(48, 48, 0.7));
    write_image_png(dir / "bg1.png", Image(40, 64, 0.3));
    write_jsonl(dir / "bgs.jsonl", {Json{{"image", "bg0.png"}}, Json{{"image", "bg1.png"}}});

    SynthJob job;
    job.backgrounds = dir / "bgs.jsonl";
    job.assets = dir / "assets" / "manifest.jsonl";
    job.out_dir = dir / "synth";
    job.count = 12;
    job.synth.seed = 3;
    const auto recs = synth_from_manifests(job);
    CHECK(recs.size() == 12);
    for (const Json& r : recs) {
        CHECK(fs::exists(job.out_dir / r["input"].get<std::string>()));
        CHECK_FALSE(r["placements"].empty());
        const Image comp = read_image_png(job.out_dir / r["input"].get<std::string>());
        const Image gt = read_image_png(job.out_dir / r["ground_truth"].get<std::string>());
        const Mask fg = read_binary_mask_png(job.out_dir / r["object_effect_mask"].get<std::string>());
        for (int y = 0; y < comp.height(); ++y)
            for (int x = 0; x < comp.width(); ++x)
                if (fg.at(y, x) < 0.5)
                    for (int ch = 0; ch < 3; ++ch) CHECK(comp.at(y, x, ch) == gt.at(y, x, ch));
    }
    job.out_dir = dir / "synth2";
    job.synth.workers = 4;
    CHECK(synth_from_manifests(job) == recs);
}
