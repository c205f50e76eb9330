#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "objclear/annotator.hpp"
#include "objclear/corpus.hpp"
#include "objclear/fusion.hpp"
#include "objclear/manifest.hpp"
#include "objclear/metrics.hpp"
#include "objclear/synthesizer.hpp"
#include "objclear/toynet.hpp"

namespace objclear {

// --- annotate --------------------------------------------------------------

/// Annotates every {"input", "ground_truth", "object_mask"} record, writing
/// masks, the 16-bit alpha map and the color layer into out_dir. Returns the
/// augmented records (also written to out_dir/manifest.jsonl). A record may
/// carry "direction_bin" to override the estimate.
std::vector<Json> annotate_manifest(const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                                    const AnnotatorConfig& cfg, int workers);

/// Loads an asset from an annotated manifest record, cropped to its support.
ForegroundAsset load_asset(const Json& record, const std::filesystem::path& base, std::size_t line);

/// Loads {"image", optional "flat_region", "depth", "labels"}. Depth is read as
/// an 8-bit map scaled by `depth_scale`; labels are raw 8-bit ids.
BackgroundScene load_background(const Json& record, const std::filesystem::path& base, std::size_t line,
                                double depth_scale = 1.0);

// --- synth -----------------------------------------------------------------

struct SynthJob {
    std::filesystem::path backgrounds;
    std::filesystem::path assets;
    std::filesystem::path out_dir;
    int count = 0;
    SynthConfig synth;
    std::set<int> flat_classes = kDefaultFlatClasses;
    double depth_grad_threshold = 1.0;
    double depth_scale = 1.0;
};

std::vector<Json> synth_from_manifests(const SynthJob& job);

// --- toy corpus training and evaluation ------------------------------------

/// Renders `count` procedural scenes and annotates them with the difference
/// mask; the annotated M_fg supervises the mask loss.
std::vector<toynet::TrainItem> annotated_training_set(const std::vector<ProceduralScene>& scenes,
                                                      const AnnotatorConfig& cfg, int workers);

struct HeldoutSample {
    double recall_first = 0.0;
    double recall_last = 0.0;
    MaskScores attention;
    double psnr_raw = 0.0;
    double psnr_bg_raw = 0.0;
    double psnr_fused = 0.0;
    double psnr_bg_fused = 0.0;
    Image generated;
    Image fused;
    Mask soft_mask;
    toynet::AttentionMap attn_final;
};

struct HeldoutEval {
    std::vector<HeldoutSample> samples;
    MetricReport fused_report;
    MetricReport raw_report;
    double median_recall_first = 0.0;
    double median_recall_last = 0.0;
};

HeldoutEval evaluate_heldout(const toynet::Params& params, const std::vector<ProceduralScene>& scenes,
                             int steps, double cfg_scale, const FusionConfig& fusion, std::uint64_t seed,
                             int workers);

double median(std::vector<double> values);

// --- demo ------------------------------------------------------------------

struct DemoOptions {
    std::uint64_t seed = 0;
    int train_scenes = 256;
    int test_scenes = 50;
    toynet::TrainConfig train = [] {
        toynet::TrainConfig c;
        c.learning_rate = 1e-2;
        c.epochs = 40;
        return c;
    }();
    AnnotatorConfig annotator;
    FusionConfig fusion;
    int steps = 20;
    double cfg_scale = 1.0;
    int workers = 1;
    std::optional<std::filesystem::path> out_dir;
};

struct DemoResult {
    toynet::Params params;
    std::vector<double> epoch_mse;
    std::vector<double> epoch_mask_loss;
    HeldoutEval heldout;
    Json report;
};

using StepLog = std::function<void(int step, int epoch, const toynet::LossReport&)>;

/// Procedural scenes -> annotate -> train -> infer -> fuse -> eval.
DemoResult run_demo(const DemoOptions& opts, const StepLog& log = {});

Json to_json(const toynet::TrainConfig& cfg);

}  // namespace objclear
