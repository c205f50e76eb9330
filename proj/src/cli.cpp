#include "objclear/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>

#include "CLI11.hpp"
#include "objclear/augment.hpp"
#include "objclear/error.hpp"
#include "objclear/parallel.hpp"
#include "objclear/pipeline.hpp"
#include "objclear/png_io.hpp"

namespace fs = std::filesystem;

namespace objclear::cli {

namespace {

struct Options {
    // shared
    std::string manifest, out;
    int workers = 0;
    std::uint64_t seed = 0;

    // annotate
    AnnotatorConfig annotator;

    // synth
    std::string backgrounds, assets;
    int count = 0;
    SynthConfig synth;
    std::vector<int> flat_classes{kDefaultFlatClasses.begin(), kDefaultFlatClasses.end()};
    double depth_grad_threshold = 1.0;
    double depth_scale = 1.0;

    // augment-preview
    int variants = 4;
    AugmentConfig augment;

    // train-toy / demo
    toynet::TrainConfig train = DemoOptions{}.train;
    int train_scenes = 256;
    int test_scenes = 50;

    // infer / fuse
    std::string checkpoint, input, mask, original, generated, attention, soft_mask;
    int steps = 20;
    double cfg_scale = 1.0;
    double blur_sigma = -1.0;
    double floor = 0.02;
};

int resolve_workers(int w) { return w <= 0 ? default_workers() : w; }

FusionConfig fusion_of(const Options& o) { return {o.blur_sigma, o.floor}; }

void write_run_config(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
                      Json resolved) {
    fs::create_directories(dir);
    write_json(dir / "run_config.json", Json{{"subcommand", command}, {"argv", args}, {"options", std::move(resolved)}});
}

Json attention_json(const toynet::AttentionMap& attn) {
    Json rows = Json::array();
    for (int p = 0; p < toynet::kPositions; ++p) {
        Json row = Json::array();
        for (int t = 0; t < toynet::kTokens; ++t) row.push_back(attn.at(p, t));
        rows.push_back(std::move(row));
    }
    Json slice = Json::array();
    for (int p = 0; p < toynet::kPositions; ++p) slice.push_back(attn.at(p, toynet::kTokens - 1));
    return Json{{"grid", toynet::kGridSide},
                {"tokens", toynet::kTokens},
                {"object_token", toynet::kTokens - 1},
                {"weights", std::move(rows)},
                {"object_slice", std::move(slice)}};
}

Mask slice_from_json(const Json& j, const fs::path& path) {
    if (!j.contains("grid") || !j.contains("object_slice")) {
        throw InvalidInput(path.string() + ": expected \"grid\" and \"object_slice\"");
    }
    const int g = j["grid"].get<int>();
    const auto& s = j["object_slice"];
    if (g <= 0 || s.size() != static_cast<std::size_t>(g) * g) {
        throw InvalidInput(path.string() + ": object_slice does not match the grid size");
    }
    Mask m(g, g);
    for (std::size_t i = 0; i < s.size(); ++i) m.values()[i] = s[i].get<double>();
    return m;
}

std::vector<toynet::TrainItem> load_train_manifest(const fs::path& manifest, const AnnotatorConfig& cfg) {
    const std::vector<Json> records = read_jsonl(manifest);
    std::vector<toynet::TrainItem> items;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const fs::path base = manifest.parent_path();
        CounterfactualPair pair{read_image_png(manifest_path(records[i], "input", base, i + 1)),
                                read_image_png(manifest_path(records[i], "ground_truth", base, i + 1)),
                                read_binary_mask_png(manifest_path(records[i], "object_mask", base, i + 1))};
        if (pair.input.height() != toynet::kImageSide || pair.input.width() != toynet::kImageSide) {
            throw InvalidInput("manifest record " + std::to_string(i + 1) + ": the toy network expects " +
                               std::to_string(toynet::kImageSide) + "x" + std::to_string(toynet::kImageSide) +
                               " images");
        }
        const AnnotationSet ann = annotate(pair, cfg);
        items.push_back({pair.input, pair.ground_truth, pair.object_mask, ann.object_effect_mask});
    }
    if (items.empty()) throw InvalidInput(manifest.string() + ": no training records");
    return items;
}

// --- commands --------------------------------------------------------------

int cmd_annotate(const Options& o, const std::vector<std::string>& args) {
    const auto records = annotate_manifest(o.manifest, o.out, o.annotator, resolve_workers(o.workers));
    write_run_config(o.out, "annotate", args,
                     {{"manifest", o.manifest},
                      {"out", o.out},
                      {"threshold", o.annotator.threshold},
                      {"epsilon", o.annotator.epsilon},
                      {"closing_radius", o.annotator.closing_radius},
                      {"workers", o.workers}});
    std::cout << "annotated " << records.size() << " pairs into " << o.out << '\n';
    return 0;
}

int cmd_synth(const Options& o, const std::vector<std::string>& args) {
    SynthJob job;
    job.backgrounds = o.backgrounds;
    job.assets = o.assets;
    job.out_dir = o.out;
    job.count = o.count;
    job.synth = o.synth;
    job.synth.seed = o.seed;
    job.synth.workers = resolve_workers(o.workers);
    job.flat_classes = {o.flat_classes.begin(), o.flat_classes.end()};
    job.depth_grad_threshold = o.depth_grad_threshold;
    job.depth_scale = o.depth_scale;
    const auto records = synth_from_manifests(job);
    write_run_config(o.out, "synth", args,
                     {{"backgrounds", o.backgrounds},
                      {"assets", o.assets},
                      {"out", o.out},
                      {"count", o.count},
                      {"seed", o.seed},
                      {"multi_prob", o.synth.multi_prob},
                      {"min_scale", o.synth.min_scale},
                      {"max_scale", o.synth.max_scale},
                      {"min_objects", o.synth.min_objects},
                      {"max_objects", o.synth.max_objects},
                      {"placement_attempts", o.synth.placement_attempts},
                      {"flat_classes", o.flat_classes},
                      {"depth_grad_threshold", o.depth_grad_threshold},
                      {"depth_scale", o.depth_scale},
                      {"workers", o.workers}});
    std::cout << "wrote " << records.size() << " of " << o.count << " samples into " << o.out << '\n';
    return 0;
}

int cmd_augment_preview(const Options& o, const std::vector<std::string>& args) {
    o.augment.validate();
    const fs::path manifest = o.manifest;
    const fs::path out = o.out;
    const std::vector<Json> records = read_jsonl(manifest);
    fs::create_directories(out);
    std::vector<Json> written;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const fs::path base = manifest.parent_path();
        const CounterfactualPair pair{read_image_png(manifest_path(records[i], "input", base, i + 1)),
                                      read_image_png(manifest_path(records[i], "ground_truth", base, i + 1)),
                                      read_binary_mask_png(manifest_path(records[i], "object_mask", base, i + 1))};
        for (int k = 0; k < o.variants; ++k) {
            Rng rng = Rng::derive(o.seed, i * static_cast<std::size_t>(o.variants) + static_cast<std::size_t>(k));
            const CounterfactualPair aug = sample_augment(pair, o.augment, rng);
            const StrokeResult stroke = simulate_stroke(aug.object_mask, o.augment, rng);
            const std::string stem = "record" + std::to_string(i + 1) + "_v" + std::to_string(k);
            write_image_png(out / (stem + "_input.png"), aug.input);
            write_image_png(out / (stem + "_ground_truth.png"), aug.ground_truth);
            write_mask_png(out / (stem + "_object_mask.png"), aug.object_mask);
            write_mask_png(out / (stem + "_stroke.png"), stroke.mask);
            written.push_back({{"record", i + 1}, {"variant", k}, {"stem", stem}, {"stroke_fallback", stroke.used_fallback}});
        }
    }
    write_jsonl(out / "manifest.jsonl", written);
    write_run_config(out, "augment-preview", args,
                     {{"manifest", o.manifest},
                      {"out", o.out},
                      {"seed", o.seed},
                      {"variants", o.variants},
                      {"morph_scale", o.augment.morph_scale},
                      {"flip_prob", o.augment.flip_prob},
                      {"crop_fraction_min", o.augment.crop_fraction_min},
                      {"crop_fraction_max", o.augment.crop_fraction_max},
                      {"color_jitter", o.augment.color_jitter}});
    std::cout << "wrote " << written.size() << " augmented variants into " << o.out << '\n';
    return 0;
}

int cmd_train(const Options& o, const std::vector<std::string>& args) {
    const fs::path out = o.out;
    toynet::TrainConfig cfg = o.train;
    cfg.seed = o.seed;
    cfg.workers = resolve_workers(o.workers);
    cfg.validate();

    std::vector<toynet::TrainItem> items;
    if (!o.manifest.empty()) {
        items = load_train_manifest(o.manifest, o.annotator);
    } else {
        items = annotated_training_set(render_corpus(Rng::splitmix(o.seed) ^ 0x7472ULL, o.train_scenes), o.annotator,
                                       cfg.workers);
    }

    fs::create_directories(out);
    std::ofstream log(out / "train_log.jsonl");
    if (!log) throw IoError("cannot write " + (out / "train_log.jsonl").string());
    toynet::Trainer trainer(toynet::Params::initialize(o.seed), cfg);
    trainer.train(items, [&](int step, int epoch, const toynet::LossReport& r) {
        log << Json{{"step", step},
                    {"epoch", epoch},
                    {"mse", r.mse},
                    {"mask_loss", r.mask_loss},
                    {"total", r.total},
                    {"degenerate_masks", r.degenerate_masks}}
                   .dump()
            << '\n';
    });
    toynet::save_checkpoint(out / "checkpoint.bin", trainer.params(), {cfg, o.seed, trainer.steps_taken()});

    Json resolved = to_json(cfg);
    resolved["manifest"] = o.manifest;
    resolved["train_scenes"] = o.train_scenes;
    resolved["out"] = o.out;
    resolved["workers"] = o.workers;
    write_run_config(out, "train-toy", args, std::move(resolved));
    std::cout << "trained " << trainer.steps_taken() << " steps; checkpoint " << (out / "checkpoint.bin").string()
              << '\n';
    return 0;
}

int cmd_infer(const Options& o, const std::vector<std::string>& args) {
    const fs::path out = o.out;
    const toynet::Params params = toynet::load_checkpoint(o.checkpoint);
    const Image input = read_image_png(o.input);
    const Mask mask = read_binary_mask_png(o.mask);
    const toynet::InferResult res = toynet::infer(input, mask, params, o.steps, o.cfg_scale, o.seed);
    const Mask soft = attention_to_mask(res.attn_final.object_slice(), input.height(), input.width(), fusion_of(o));

    fs::create_directories(out);
    write_image_png(out / "output.png", res.output);
    write_mask_png(out / "soft_mask.png", soft);
    Json attn = attention_json(res.attn_final);
    attn["null_evaluations"] = res.null_evaluations;
    write_json(out / "attention.json", attn);
    write_run_config(out, "infer", args,
                     {{"checkpoint", o.checkpoint},
                      {"input", o.input},
                      {"mask", o.mask},
                      {"out", o.out},
                      {"steps", o.steps},
                      {"cfg_scale", o.cfg_scale},
                      {"seed", o.seed},
                      {"blur_sigma", o.blur_sigma},
                      {"floor", o.floor}});
    std::cout << "wrote " << (out / "output.png").string() << '\n';
    return 0;
}

int cmd_fuse(const Options& o, const std::vector<std::string>& args) {
    const fs::path out = o.out;
    const Image original = read_image_png(o.original);
    const Image generated = read_image_png(o.generated);
    Mask soft;
    if (!o.soft_mask.empty()) {
        soft = read_mask_png(o.soft_mask);
    } else {
        soft = attention_to_mask(slice_from_json(read_json(o.attention), o.attention), original.height(),
                                 original.width(), fusion_of(o));
    }
    const Image fused = fuse(original, generated, soft);
    fs::create_directories(out);
    write_image_png(out / "fused.png", fused);
    write_mask_png(out / "soft_mask.png", soft);
    write_run_config(out, "fuse", args,
                     {{"original", o.original},
                      {"generated", o.generated},
                      {"attention", o.attention},
                      {"soft_mask", o.soft_mask},
                      {"out", o.out},
                      {"blur_sigma", o.blur_sigma},
                      {"floor", o.floor}});
    std::cout << "wrote " << (out / "fused.png").string() << '\n';
    return 0;
}

int cmd_eval(const Options& o, const std::vector<std::string>& args) {
    const fs::path manifest = o.manifest;
    const std::vector<Json> records = read_jsonl(manifest);
    if (records.empty()) throw InvalidInput(manifest.string() + ": no records");
    MetricReport report;
    report.samples.resize(records.size());
    const fs::path base = manifest.parent_path();
    std::vector<fs::path> pred(records.size()), gt(records.size()), fg(records.size());
    std::vector<std::optional<fs::path>> att(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        pred[i] = manifest_path(records[i], "prediction", base, i + 1);
        gt[i] = manifest_path(records[i], "ground_truth", base, i + 1);
        fg[i] = manifest_path(records[i], "fg_mask", base, i + 1);
        if (records[i].contains("attention_mask")) att[i] = manifest_path(records[i], "attention_mask", base, i + 1);
    }
    parallel_for(records.size(), resolve_workers(o.workers), [&](std::size_t i) {
        const Image p = read_image_png(pred[i]);
        const Image g = read_image_png(gt[i]);
        const Mask m = read_binary_mask_png(fg[i]);
        SampleMetrics& s = report.samples[i];
        s.id = records[i].contains("id") ? records[i]["id"].get<std::string>() : pred[i].stem().string();
        s.psnr = psnr(p, g);
        s.psnr_bg = psnr_bg(p, g, m);
        if (att[i]) {
            s.mask = mask_metrics(read_mask_png(*att[i]), m);
        } else {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            s.mask = {nan, nan, nan};
        }
    });
    report.finalize();
    const fs::path out = o.out;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_json(out, report.to_json_value());
    write_run_config(out.parent_path().empty() ? fs::path(".") : out.parent_path(), "eval", args,
                     {{"manifest", o.manifest}, {"out", o.out}, {"workers", o.workers}});
    std::cout << report.to_json(false) << '\n';
    return 0;
}

int cmd_demo(const Options& o, const std::vector<std::string>& args) {
    DemoOptions d;
    d.seed = o.seed;
    d.train_scenes = o.train_scenes;
    d.test_scenes = o.test_scenes;
    d.train = o.train;
    d.annotator = o.annotator;
    d.fusion = fusion_of(o);
    d.steps = o.steps;
    d.cfg_scale = o.cfg_scale;
    d.workers = resolve_workers(o.workers);
    if (!o.out.empty()) d.out_dir = fs::path(o.out);
    const DemoResult result = run_demo(d);
    if (d.out_dir) {
        Json resolved = to_json(d.train);
        resolved["train_scenes"] = o.train_scenes;
        resolved["test_scenes"] = o.test_scenes;
        resolved["steps"] = o.steps;
        resolved["out"] = o.out;
        resolved["workers"] = o.workers;
        write_run_config(*d.out_dir, "demo", args, std::move(resolved));
    }
    std::cout << result.report.dump(2) << '\n';
    return 0;
}

void add_workers(CLI::App* sub, Options& o) {
    sub->add_option("--workers", o.workers, "Worker threads (0 = all cores)")->capture_default_str();
}

void add_fusion(CLI::App* sub, Options& o) {
    sub->add_option("--blur-sigma", o.blur_sigma, "Soft-mask blur sigma in pixels (negative = side/32)")
        ->capture_default_str();
    sub->add_option("--floor", o.floor, "Attention floor before upsampling")->capture_default_str();
}

void add_training(CLI::App* sub, Options& o) {
    sub->add_option("--epochs", o.train.epochs)->capture_default_str();
    sub->add_option("--lr", o.train.learning_rate)->capture_default_str();
    sub->add_option("--momentum", o.train.momentum)->capture_default_str();
    sub->add_option("--lambda-mask", o.train.lambda_mask)->capture_default_str();
    sub->add_option("--batch-size", o.train.batch_size)->capture_default_str();
    sub->add_option("--drop-prob", o.train.guidance_drop_prob, "Guidance drop probability")->capture_default_str();
    sub->add_option("--train-scenes", o.train_scenes, "Procedural training scenes")->capture_default_str();
}

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"Object and effect removal toolkit"};
    app.name("objclear");
    app.require_subcommand(0, 1);
    Options o;
    std::string replay;
    app.add_option("--replay", replay, "Re-run the command recorded in a run_config.json")->check(CLI::ExistingFile);

    auto* annotate_cmd = app.add_subcommand("annotate", "Derive masks and alpha layers from counterfactual pairs");
    annotate_cmd->add_option("--manifest", o.manifest, "JSONL of {input, ground_truth, object_mask}")->required();
    annotate_cmd->add_option("--out", o.out, "Output directory")->required();
    annotate_cmd->add_option("--threshold", o.annotator.threshold)->capture_default_str();
    annotate_cmd->add_option("--epsilon", o.annotator.epsilon)->capture_default_str();
    annotate_cmd->add_option("--closing-radius", o.annotator.closing_radius)->capture_default_str();
    add_workers(annotate_cmd, o);

    auto* synth_cmd = app.add_subcommand("synth", "Composite extracted assets onto backgrounds");
    synth_cmd->add_option("--backgrounds", o.backgrounds, "JSONL of {image, flat_region?, depth?, labels?}")
        ->required();
    synth_cmd->add_option("--assets", o.assets, "Annotated manifest written by `annotate`")->required();
    synth_cmd->add_option("--out", o.out)->required();
    synth_cmd->add_option("--count", o.count)->required();
    synth_cmd->add_option("--seed", o.seed)->required();
    synth_cmd->add_option("--multi-prob", o.synth.multi_prob)->capture_default_str();
    synth_cmd->add_option("--min-scale", o.synth.min_scale)->capture_default_str();
    synth_cmd->add_option("--max-scale", o.synth.max_scale)->capture_default_str();
    synth_cmd->add_option("--min-objects", o.synth.min_objects)->capture_default_str();
    synth_cmd->add_option("--max-objects", o.synth.max_objects)->capture_default_str();
    synth_cmd->add_option("--placement-attempts", o.synth.placement_attempts)->capture_default_str();
    synth_cmd->add_option("--flat-classes", o.flat_classes)->capture_default_str();
    synth_cmd->add_option("--depth-grad-threshold", o.depth_grad_threshold)->capture_default_str();
    synth_cmd->add_option("--depth-scale", o.depth_scale)->capture_default_str();
    add_workers(synth_cmd, o);

    auto* aug_cmd = app.add_subcommand("augment-preview", "Write augmented variants of counterfactual pairs");
    aug_cmd->add_option("--manifest", o.manifest)->required();
    aug_cmd->add_option("--out", o.out)->required();
    aug_cmd->add_option("--seed", o.seed)->capture_default_str();
    aug_cmd->add_option("--variants", o.variants)->capture_default_str()->check(CLI::PositiveNumber);
    aug_cmd->add_option("--morph-scale", o.augment.morph_scale)->capture_default_str();
    aug_cmd->add_option("--flip-prob", o.augment.flip_prob)->capture_default_str();
    aug_cmd->add_option("--crop-min", o.augment.crop_fraction_min)->capture_default_str();
    aug_cmd->add_option("--crop-max", o.augment.crop_fraction_max)->capture_default_str();
    aug_cmd->add_option("--color-jitter", o.augment.color_jitter)->capture_default_str();

    auto* train_cmd = app.add_subcommand("train-toy", "Train the toy removal network");
    train_cmd->add_option("--seed", o.seed)->required();
    train_cmd->add_option("--out", o.out)->required();
    train_cmd->add_option("--manifest", o.manifest, "Optional 32x32 pairs; procedural scenes otherwise");
    add_training(train_cmd, o);
    add_workers(train_cmd, o);

    auto* infer_cmd = app.add_subcommand("infer", "Remove an object with a trained checkpoint");
    infer_cmd->add_option("--checkpoint", o.checkpoint)->required();
    infer_cmd->add_option("--input", o.input)->required();
    infer_cmd->add_option("--mask", o.mask)->required();
    infer_cmd->add_option("--out", o.out)->required();
    infer_cmd->add_option("--steps", o.steps)->capture_default_str();
    infer_cmd->add_option("--cfg-scale", o.cfg_scale)->capture_default_str();
    infer_cmd->add_option("--seed", o.seed)->capture_default_str();
    add_fusion(infer_cmd, o);

    auto* fuse_cmd = app.add_subcommand("fuse", "Blend generated pixels back into the original");
    fuse_cmd->add_option("--original", o.original)->required();
    fuse_cmd->add_option("--generated", o.generated)->required();
    auto* att_opt = fuse_cmd->add_option("--attention", o.attention, "attention.json written by `infer`");
    auto* soft_opt = fuse_cmd->add_option("--soft-mask", o.soft_mask, "Precomputed soft mask PNG");
    att_opt->excludes(soft_opt);
    fuse_cmd->add_option("--out", o.out)->required();
    add_fusion(fuse_cmd, o);

    auto* eval_cmd = app.add_subcommand("eval", "PSNR, background PSNR and mask scores");
    eval_cmd->add_option("--manifest", o.manifest, "JSONL of {prediction, ground_truth, fg_mask, attention_mask?}")
        ->required();
    eval_cmd->add_option("--out", o.out, "Report JSON path")->required();
    add_workers(eval_cmd, o);

    auto* demo_cmd = app.add_subcommand("demo", "Train and evaluate end to end on procedural scenes");
    demo_cmd->add_option("--seed", o.seed)->required();
    demo_cmd->add_option("--out", o.out, "Optional directory for images, checkpoint and report");
    demo_cmd->add_option("--test-scenes", o.test_scenes)->capture_default_str();
    demo_cmd->add_option("--steps", o.steps)->capture_default_str();
    demo_cmd->add_option("--cfg-scale", o.cfg_scale)->capture_default_str();
    add_training(demo_cmd, o);
    add_fusion(demo_cmd, o);
    add_workers(demo_cmd, o);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (!replay.empty()) {
        if (app.get_subcommands().size() > 0) {
            std::cerr << "error [invalid-argument]: --replay takes no subcommand\n";
            return 2;
        }
        const Json cfg = read_json(replay);
        if (!cfg.contains("argv") || !cfg["argv"].is_array()) {
            throw InvalidInput(replay + ": no recorded argv");
        }
        return dispatch(cfg["argv"].get<std::vector<std::string>>());
    }
    if (app.get_subcommands().empty()) {
        std::cerr << app.help();
        return 2;
    }

    const CLI::App* sub = app.get_subcommands().front();
    if (sub == fuse_cmd && o.attention.empty() && o.soft_mask.empty()) {
        std::cerr << "error [invalid-argument]: fuse needs --attention or --soft-mask\n";
        return 2;
    }
    if (sub == annotate_cmd) return cmd_annotate(o, args);
    if (sub == synth_cmd) return cmd_synth(o, args);
    if (sub == aug_cmd) return cmd_augment_preview(o, args);
    if (sub == train_cmd) return cmd_train(o, args);
    if (sub == infer_cmd) return cmd_infer(o, args);
    if (sub == fuse_cmd) return cmd_fuse(o, args);
    if (sub == eval_cmd) return cmd_eval(o, args);
    return cmd_demo(o, args);
}

}  // namespace

int run(const std::vector<std::string>& args) {
    try {
        return dispatch(args);
    } catch (const Error& e) {
        std::cerr << "error [" << e.category() << "]: " << e.what() << '\n';
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error [io]: " << e.what() << '\n';
        return 1;
    } catch (const Json::exception& e) {
        std::cerr << "error [invalid-input]: " << e.what() << '\n';
        return 1;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace objclear::cli
