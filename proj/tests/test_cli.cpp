#include <fstream>
#include <iostream>
#include <sstream>

#include "doctest.h"
#include "objclear/cli.hpp"
#include "objclear/corpus.hpp"
#include "objclear/manifest.hpp"
#include "objclear/png_io.hpp"
#include "support.hpp"

using namespace objclear;
namespace fs = std::filesystem;

namespace {

struct Captured {
    int code = 0;
    std::string out;
    std::string err;
};

Captured run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    auto* old_out = std::cout.rdbuf(out.rdbuf());
    auto* old_err = std::cerr.rdbuf(err.rdbuf());
    Captured c;
    c.code = cli::run(args);
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    c.out = out.str();
    c.err = err.str();
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

fs::path write_pairs(const fs::path& dir, int count) {
    std::vector<Json> records;
    const auto scenes = render_corpus(19, count);
    for (int i = 0; i < count; ++i) {
        const std::string stem = "p" + std::to_string(i);
        write_image_png(dir / (stem + "_in.png"), scenes[static_cast<std::size_t>(i)].pair.input);
        write_image_png(dir / (stem + "_gt.png"), scenes[static_cast<std::size_t>(i)].pair.ground_truth);
        write_mask_png(dir / (stem + "_m.png"), scenes[static_cast<std::size_t>(i)].pair.object_mask);
        records.push_back(
            {{"input", stem + "_in.png"}, {"ground_truth", stem + "_gt.png"}, {"object_mask", stem + "_m.png"}});
    }
    write_jsonl(dir / "pairs.jsonl", records);
    return dir / "pairs.jsonl";
}

}  // namespace

TEST_CASE("help and usage errors") {
    const Captured help = run_cli({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("annotate") != std::string::npos);
    CHECK(run_cli({"demo", "--help"}).code == 0);
    CHECK(run_cli({"frobnicate"}).code == 2);
    CHECK(run_cli({}).code == 2);
    CHECK(run_cli({"synth", "--backgrounds", "a", "--assets", "b", "--out", "c", "--count", "1"}).code == 2);
    CHECK(run_cli({"demo"}).code == 2);
    CHECK(run_cli({"train-toy", "--out", "x"}).code == 2);
}

TEST_CASE("annotate with a missing file names it") {
    const auto dir = testing::scratch_dir("cli_missing");
    const fs::path manifest = write_pairs(dir, 2);
    fs::remove(dir / "p1_m.png");
    const Captured c = run_cli({"annotate", "--manifest", manifest.string(), "--out", (dir / "out").string()});
    CHECK(c.code == 1);
    CHECK(c.err.find("p1_m.png") != std::string::npos);
    CHECK(c.err.find("error [io]") != std::string::npos);
}

TEST_CASE("annotate, synth and replay") {
    const auto dir = testing::scratch_dir("cli_pipeline");
    const fs::path manifest = write_pairs(dir, 4);
    REQUIRE(run_cli({"annotate", "--manifest", manifest.string(), "--out", (dir / "ann").string()}).code == 0);
    const Json cfg = read_json(dir / "ann" / "run_config.json");
    CHECK(cfg["subcommand"] == "annotate");
    CHECK(cfg["options"]["threshold"] == 0.05);

    write_image_png(dir / "bg.png", Image(48, 48, 0.5));
    write_jsonl(dir / "bgs.jsonl", {Json{{"image", "bg.png"}}});
    const std::vector<std::string> synth = {"synth", "--backgrounds", (dir / "bgs.jsonl").string(), "--assets",
                                            (dir / "ann" / "manifest.jsonl").string(), "--out",
                                            (dir / "syn").string(), "--count", "6", "--seed", "4"};
    REQUIRE(run_cli(synth).code == 0);
    const std::string first = slurp(dir / "syn" / "manifest.jsonl");
    const std::string composite = slurp(dir / "syn" / "sample_00002_composite.png");
    fs::remove_all(dir / "syn" / "sample_00002_composite.png");

    fs::copy_file(dir / "syn" / "run_config.json", dir / "replay.json");
    REQUIRE(run_cli({"--replay", (dir / "replay.json").string()}).code == 0);
    CHECK(slurp(dir / "syn" / "manifest.jsonl") == first);
    CHECK(slurp(dir / "syn" / "sample_00002_composite.png") == composite);

    CHECK(run_cli({"augment-preview", "--manifest", manifest.string(), "--out", (dir / "aug").string(), "--seed",
                   "2", "--variants", "2"})
              .code == 0);
    CHECK(fs::exists(dir / "aug" / "record1_v1_stroke.png"));
}

TEST_CASE("train, infer, fuse and eval") {
    const auto dir = testing::scratch_dir("cli_model");
    REQUIRE(run_cli({"train-toy", "--seed", "3", "--out", (dir / "train").string(), "--train-scenes", "16",
                     "--epochs", "1", "--batch-size", "8"})
                .code == 0);
    std::ifstream log(dir / "train" / "train_log.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
        const Json j = Json::parse(line);
        CHECK(j.contains("mse"));
        CHECK(j.contains("mask_loss"));
        CHECK(j.contains("total"));
        ++lines;
    }
    CHECK(lines == 2);

    const ProceduralScene s = render_scene(70, 0);
    write_image_png(dir / "in.png", s.pair.input);
    write_image_png(dir / "gt.png", s.pair.ground_truth);
    write_mask_png(dir / "m.png", s.pair.object_mask);
    write_mask_png(dir / "fg.png", s.object_effect_mask);
    REQUIRE(run_cli({"infer", "--checkpoint", (dir / "train" / "checkpoint.bin").string(), "--input",
                     (dir / "in.png").string(), "--mask", (dir / "m.png").string(), "--out",
                     (dir / "inf").string()})
                .code == 0);
    CHECK(fs::exists(dir / "inf" / "soft_mask.png"));
    const Json attn = read_json(dir / "inf" / "attention.json");
    CHECK(attn["object_slice"].size() == 64);

    REQUIRE(run_cli({"fuse", "--original", (dir / "in.png").string(), "--generated",
                     (dir / "inf" / "output.png").string(), "--attention", (dir / "inf" / "attention.json").string(),
                     "--out", (dir / "fuse").string()})
                .code == 0);
    CHECK(slurp(dir / "fuse" / "soft_mask.png") == slurp(dir / "inf" / "soft_mask.png"));
    CHECK(run_cli({"fuse", "--original", "a.png", "--generated", "b.png", "--out", "c"}).code == 2);

    write_jsonl(dir / "eval.jsonl", {Json{{"prediction", "fuse/fused.png"},
                                          {"ground_truth", "gt.png"},
                                          {"fg_mask", "fg.png"},
                                          {"attention_mask", "inf/soft_mask.png"}}});
    const Captured ev =
        run_cli({"eval", "--manifest", (dir / "eval.jsonl").string(), "--out", (dir / "report.json").string()});
    REQUIRE(ev.code == 0);
    const Json report = read_json(dir / "report.json");
    CHECK(report["aggregate"]["count"] == 1);
    CHECK(report["samples"][0]["psnr"].get<double>() > 0.0);
}

TEST_CASE("demo output is deterministic") {
    const std::vector<std::string> args = {"demo", "--seed", "7", "--train-scenes", "16", "--test-scenes", "3",
                                           "--epochs", "1", "--workers", "1"};
    const Captured a = run_cli(args);
    auto args4 = args;
    args4.back() = "3";
    const Captured b = run_cli(args4);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(Json::parse(a.out)["fused"]["aggregate"]["count"] == 3);
}
