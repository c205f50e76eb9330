#include "objclear/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "objclear/error.hpp"
#include "objclear/parallel.hpp"
#include "objclear/png_io.hpp"

namespace fs = std::filesystem;

namespace objclear {

namespace {

std::string record_id(const Json& record, const fs::path& input, std::size_t index) {
    if (record.contains("id") && record["id"].is_string()) return record["id"].get<std::string>();
    if (!input.empty()) return input.stem().string();
    return "record_" + std::to_string(index);
}

std::string sample_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%05zu", i);
    return buf;
}

Json relative_to(const fs::path& file, const fs::path& base) {
    return fs::path(file).lexically_relative(base).generic_string();
}

}  // namespace

std::vector<Json> annotate_manifest(const fs::path& manifest, const fs::path& out_dir, const AnnotatorConfig& cfg,
                                    int workers) {
    const std::vector<Json> records = read_jsonl(manifest);
    const fs::path base = manifest.parent_path();

    // Resolve every path up front so a missing file is reported in manifest order.
    struct Job {
        fs::path input, ground_truth, object_mask;
        std::string id;
        std::optional<int> bin;
    };
    std::vector<Job> jobs;
    jobs.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const Json& rec = records[i];
        Job job;
        job.input = manifest_path(rec, "input", base, i + 1);
        job.ground_truth = manifest_path(rec, "ground_truth", base, i + 1);
        job.object_mask = manifest_path(rec, "object_mask", base, i + 1);
        job.id = record_id(rec, job.input, i);
        if (rec.contains("direction_bin") && !rec["direction_bin"].is_null()) {
            const int bin = rec["direction_bin"].get<int>();
            if (bin < 0 || bin > 7) {
                throw InvalidInput("manifest record " + std::to_string(i + 1) + ": direction_bin must lie in 0..7");
            }
            job.bin = bin;
        }
        jobs.push_back(std::move(job));
    }

    fs::create_directories(out_dir);
    std::vector<Json> out(records.size());
    parallel_for(jobs.size(), workers, [&](std::size_t i) {
        const Job& job = jobs[i];
        CounterfactualPair pair{read_image_png(job.input), read_image_png(job.ground_truth),
                                read_binary_mask_png(job.object_mask)};
        const AnnotationSet ann = annotate(pair, cfg);
        const FullFrameLayer layer = compute_alpha_layer(pair, ann, cfg.epsilon);

        const fs::path eff = out_dir / (job.id + "_effect_mask.png");
        const fs::path oem = out_dir / (job.id + "_object_effect_mask.png");
        const fs::path alpha = out_dir / (job.id + "_alpha.png");
        const fs::path color = out_dir / (job.id + "_color.png");
        write_mask_png(eff, ann.effect_mask);
        write_mask_png(oem, ann.object_effect_mask);
        write_signed16_png(alpha, layer.alpha);
        write_image_png(color, layer.color);

        Json rec = records[i];
        rec["id"] = job.id;
        rec["input"] = job.input.generic_string();
        rec["ground_truth"] = job.ground_truth.generic_string();
        rec["object_mask"] = job.object_mask.generic_string();
        rec["effect_mask"] = eff.generic_string();
        rec["object_effect_mask"] = oem.generic_string();
        rec["alpha"] = alpha.generic_string();
        rec["color_layer"] = color.generic_string();
        rec["threshold"] = ann.threshold_used;
        if (job.bin) {
            rec["direction_bin"] = *job.bin;
        } else if (ann.effect_mask.any()) {
            rec["direction_bin"] = estimate_shadow_direction(ann.object_mask, ann.effect_mask);
        } else {
            rec["direction_bin"] = nullptr;
            rec["warning"] = "empty effect mask; set direction_bin manually";
        }
        out[i] = std::move(rec);
    });

    for (const Json& rec : out) {
        if (rec.contains("warning")) {
            Json w{{"level", "warning"}, {"id", rec["id"]}, {"message", rec["warning"]}};
            std::cerr << w.dump() << '\n';
        }
    }
    write_jsonl(out_dir / "manifest.jsonl", out);
    return out;
}

ForegroundAsset load_asset(const Json& record, const fs::path& base, std::size_t line) {
    const std::string where = "manifest record " + std::to_string(line);
    if (!record.contains("direction_bin") || !record["direction_bin"].is_number_integer()) {
        throw InvalidInput(where + ": asset has no direction_bin");
    }
    const Mask obj = read_binary_mask_png(manifest_path(record, "object_mask", base, line));
    const Mask eff = read_binary_mask_png(manifest_path(record, "effect_mask", base, line));
    const Image color = read_image_png(manifest_path(record, "color_layer", base, line));
    AlphaMap alpha(read_signed16_png(manifest_path(record, "alpha", base, line)));
    if (!color.same_extent(obj) || !alpha.same_extent(obj) || !eff.same_extent(obj)) {
        throw InvalidInput(where + ": asset layers differ in size");
    }
    // 16-bit storage cannot hold 0 exactly; restore the exact values off and on the object.
    for (int r = 0; r < obj.height(); ++r)
        for (int c = 0; c < obj.width(); ++c) {
            const bool on_obj = obj.at(r, c) > 0.5;
            const bool on_eff = !on_obj && eff.at(r, c) > 0.5;
            for (int ch = 0; ch < AlphaMap::kChannels; ++ch) {
                if (on_obj) alpha.at(r, c, ch) = 1.0;
                else if (!on_eff) alpha.at(r, c, ch) = 0.0;
            }
        }
    ForegroundAsset asset = crop_asset(color, alpha, obj, mask_and_not(eff, obj), record["direction_bin"].get<int>());
    asset.id = record.contains("id") && record["id"].is_string() ? record["id"].get<std::string>()
                                                                 : "asset_" + std::to_string(line);
    return asset;
}

BackgroundScene load_background(const Json& record, const fs::path& base, std::size_t line, double depth_scale) {
    const fs::path image_path = manifest_path(record, "image", base, line);
    BackgroundScene scene;
    scene.id = record.contains("id") && record["id"].is_string() ? record["id"].get<std::string>()
                                                                 : image_path.stem().string();
    scene.image = read_image_png(image_path);
    const int h = scene.image.height(), w = scene.image.width();
    const auto check = [&](const Raster& r, const char* field) {
        if (!r.same_extent(scene.image)) {
            throw InvalidInput("manifest record " + std::to_string(line) + ": " + field +
                               " size differs from the image");
        }
    };

    const bool has_flat = record.contains("flat_region");
    const bool has_depth = record.contains("depth");
    const bool has_labels = record.contains("labels");
    if (has_flat) {
        scene.flat_region = read_binary_mask_png(manifest_path(record, "flat_region", base, line));
        check(scene.flat_region, "flat_region");
    } else if (!has_depth && !has_labels) {
        scene.flat_region = Mask(h, w, 1.0);
    }
    if (has_depth) {
        Mask d = read_mask_png(manifest_path(record, "depth", base, line));
        check(d, "depth");
        for (double& v : d.values()) v *= 255.0 * depth_scale;
        scene.depth = std::move(d);
    }
    if (has_labels) {
        const Mask raw = read_mask_png(manifest_path(record, "labels", base, line));
        check(raw, "labels");
        LabelMap labels{h, w, std::vector<int>(static_cast<std::size_t>(h) * w)};
        for (std::size_t i = 0; i < labels.labels.size(); ++i)
            labels.labels[i] = static_cast<int>(std::lround(raw.values()[i] * 255.0));
        scene.semantic_labels = std::move(labels);
    }
    return scene;
}

std::vector<Json> synth_from_manifests(const SynthJob& job) {
    if (job.count <= 0) throw InvalidArgument("synth: count must be positive");
    const std::vector<Json> bg_records = read_jsonl(job.backgrounds);
    const std::vector<Json> asset_records = read_jsonl(job.assets);
    if (bg_records.empty()) throw InvalidInput("synth: background manifest is empty");
    if (asset_records.empty()) throw InvalidInput("synth: asset manifest is empty");

    std::vector<BackgroundScene> bgs;
    for (std::size_t i = 0; i < bg_records.size(); ++i) {
        BackgroundScene s = load_background(bg_records[i], job.backgrounds.parent_path(), i + 1, job.depth_scale);
        if (s.depth || s.semantic_labels) {
            Mask eligible = select_placement(s, job.flat_classes, job.depth_grad_threshold);
            s.flat_region = s.flat_region.height() > 0 && s.flat_region.same_extent(eligible)
                                ? mask_and(s.flat_region, eligible)
                                : std::move(eligible);
        }
        bgs.push_back(std::move(s));
    }
    std::vector<ForegroundAsset> assets;
    for (std::size_t i = 0; i < asset_records.size(); ++i)
        assets.push_back(load_asset(asset_records[i], job.assets.parent_path(), i + 1));

    const std::vector<CompositeSample> samples = synth_dataset(bgs, assets, job.count, job.synth);

    fs::create_directories(job.out_dir);
    std::vector<Json> out(samples.size());
    parallel_for(samples.size(), job.synth.workers, [&](std::size_t i) {
        const CompositeSample& s = samples[i];
        const std::string name = sample_name(i);
        const fs::path comp = job.out_dir / (name + "_composite.png");
        const fs::path gt = job.out_dir / (name + "_ground_truth.png");
        const fs::path obj = job.out_dir / (name + "_object_mask.png");
        const fs::path oem = job.out_dir / (name + "_object_effect_mask.png");
        write_image_png(comp, s.composite);
        write_image_png(gt, s.ground_truth);
        write_mask_png(obj, s.object_mask);
        write_mask_png(oem, s.object_effect_mask);

        Json placements = Json::array();
        for (const Placement& p : s.provenance)
            placements.push_back(
                {{"asset_id", p.asset_id}, {"asset_index", p.asset_index}, {"row", p.row}, {"col", p.col},
                 {"scale", p.scale}});
        out[i] = Json{{"id", name},
                      {"input", relative_to(comp, job.out_dir)},
                      {"ground_truth", relative_to(gt, job.out_dir)},
                      {"object_mask", relative_to(obj, job.out_dir)},
                      {"object_effect_mask", relative_to(oem, job.out_dir)},
                      {"background_id", s.background_id},
                      {"placements", std::move(placements)}};
    });
    write_jsonl(job.out_dir / "manifest.jsonl", out);
    return out;
}

std::vector<toynet::TrainItem> annotated_training_set(const std::vector<ProceduralScene>& scenes,
                                                      const AnnotatorConfig& cfg, int workers) {
    std::vector<toynet::TrainItem> items(scenes.size());
    parallel_for(scenes.size(), workers, [&](std::size_t i) {
        const AnnotationSet ann = annotate(scenes[i].pair, cfg);
        items[i] = to_train_item(scenes[i], ann.object_effect_mask);
    });
    return items;
}

double median(std::vector<double> values) {
    if (values.empty()) throw InvalidArgument("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

HeldoutEval evaluate_heldout(const toynet::Params& params, const std::vector<ProceduralScene>& scenes, int steps,
                             double cfg_scale, const FusionConfig& fusion, std::uint64_t seed, int workers) {
    if (scenes.empty()) throw InvalidArgument("evaluate_heldout: no scenes");
    HeldoutEval ev;
    ev.samples.resize(scenes.size());
    parallel_for(scenes.size(), workers, [&](std::size_t i) {
        const ProceduralScene& s = scenes[i];
        const Image& input = s.pair.input;
        const Image& gt = s.pair.ground_truth;
        const toynet::InferResult res =
            toynet::infer(input, s.pair.object_mask, params, steps, cfg_scale, Rng::derive(seed, i).next());

        HeldoutSample& out = ev.samples[i];
        out.generated = res.output;
        out.attn_final = res.attn_final;
        out.recall_first = toynet::attention_scores(res.attn_steps.front(), s.object_effect_mask).recall;
        out.attention = toynet::attention_scores(res.attn_final, s.object_effect_mask);
        out.recall_last = out.attention.recall;
        out.soft_mask = attention_to_mask(res.attn_final.object_slice(), input.height(), input.width(), fusion);
        out.fused = fuse(input, res.output, out.soft_mask);
        out.psnr_raw = psnr(res.output, gt);
        out.psnr_bg_raw = psnr_bg(res.output, gt, s.object_effect_mask);
        out.psnr_fused = psnr(out.fused, gt);
        out.psnr_bg_fused = psnr_bg(out.fused, gt, s.object_effect_mask);
    });

    std::vector<double> first, last;
    for (std::size_t i = 0; i < ev.samples.size(); ++i) {
        const HeldoutSample& s = ev.samples[i];
        const std::string id = sample_name(i);
        ev.fused_report.samples.push_back({id, s.psnr_fused, s.psnr_bg_fused, s.attention});
        ev.raw_report.samples.push_back({id, s.psnr_raw, s.psnr_bg_raw, s.attention});
        first.push_back(s.recall_first);
        last.push_back(s.recall_last);
    }
    ev.fused_report.finalize();
    ev.raw_report.finalize();
    ev.median_recall_first = median(first);
    ev.median_recall_last = median(last);
    return ev;
}

Json to_json(const toynet::TrainConfig& cfg) {
    return Json{{"lambda_mask", cfg.lambda_mask},     {"learning_rate", cfg.learning_rate},
                {"momentum", cfg.momentum},           {"epochs", cfg.epochs},
                {"batch_size", cfg.batch_size},       {"guidance_drop_prob", cfg.guidance_drop_prob},
                {"cfg_scale", cfg.cfg_scale},         {"seed", cfg.seed}};
}

DemoResult run_demo(const DemoOptions& opts, const StepLog& log) {
    if (opts.train_scenes <= 0 || opts.test_scenes <= 0) throw InvalidArgument("demo: scene counts must be positive");
    const std::uint64_t train_seed = Rng::splitmix(opts.seed) ^ 0x7472ULL;
    const std::uint64_t test_seed = Rng::splitmix(opts.seed) ^ 0x7465ULL;
    const std::vector<ProceduralScene> train_scenes = render_corpus(train_seed, opts.train_scenes);
    const std::vector<ProceduralScene> test_scenes = render_corpus(test_seed, opts.test_scenes);
    const std::vector<toynet::TrainItem> items = annotated_training_set(train_scenes, opts.annotator, opts.workers);

    toynet::TrainConfig cfg = opts.train;
    cfg.seed = opts.seed;
    cfg.workers = opts.workers;
    cfg.validate();
    toynet::Trainer trainer(toynet::Params::initialize(opts.seed), cfg);

    DemoResult result;
    const std::size_t steps_per_epoch =
        (items.size() + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size);
    const std::vector<toynet::LossReport> reports = trainer.train(items, log);
    for (int e = 0; e < cfg.epochs; ++e) {
        double mse = 0.0, mk = 0.0;
        for (std::size_t k = 0; k < steps_per_epoch; ++k) {
            const toynet::LossReport& r = reports[static_cast<std::size_t>(e) * steps_per_epoch + k];
            mse += r.mse;
            mk += r.mask_loss;
        }
        result.epoch_mse.push_back(mse / static_cast<double>(steps_per_epoch));
        result.epoch_mask_loss.push_back(mk / static_cast<double>(steps_per_epoch));
    }
    result.params = trainer.params();
    result.heldout =
        evaluate_heldout(result.params, test_scenes, opts.steps, opts.cfg_scale, opts.fusion, opts.seed, opts.workers);

    const HeldoutEval& ev = result.heldout;
    int fused_not_worse = 0;
    for (const HeldoutSample& s : ev.samples)
        if (s.psnr_bg_fused >= s.psnr_bg_raw) ++fused_not_worse;

    Json training{{"steps", trainer.steps_taken()},
                  {"epoch_mse", result.epoch_mse},
                  {"epoch_mask_loss", result.epoch_mask_loss}};
    result.report = Json{{"seed", opts.seed},
                         {"train_scenes", opts.train_scenes},
                         {"test_scenes", opts.test_scenes},
                         {"inference_steps", opts.steps},
                         {"train", to_json(cfg)},
                         {"training", std::move(training)},
                         {"attention",
                          {{"median_recall_first_step", ev.median_recall_first},
                           {"median_recall_last_step", ev.median_recall_last}}},
                         {"fused_bg_not_worse", fused_not_worse},
                         {"fused", ev.fused_report.to_json_value(false)},
                         {"raw", ev.raw_report.to_json_value(false)}};

    if (opts.out_dir) {
        const fs::path& dir = *opts.out_dir;
        fs::create_directories(dir);
        for (std::size_t i = 0; i < ev.samples.size(); ++i) {
            const HeldoutSample& s = ev.samples[i];
            const std::string name = sample_name(i);
            write_image_png(dir / (name + "_input.png"), test_scenes[i].pair.input);
            write_image_png(dir / (name + "_generated.png"), s.generated);
            write_image_png(dir / (name + "_fused.png"), s.fused);
            write_mask_png(dir / (name + "_soft_mask.png"), s.soft_mask);
            write_image_png(dir / (name + "_error.png"),
                            heat_colormap(abs_diff_map(s.fused, test_scenes[i].pair.ground_truth)));
        }
        toynet::save_checkpoint(dir / "checkpoint.bin", result.params,
                                {cfg, opts.seed, trainer.steps_taken()});
        write_json(dir / "report.json", result.report);
    }
    return result;
}

}  // namespace objclear
