// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "objclear/annotator.hpp"
#include "objclear/corpus.hpp"
#include "objclear/fusion.hpp"
#include "objclear/metrics.hpp"
#include "objclear/parallel.hpp"
#include "objclear/pipeline.hpp"
#include "objclear/synthesizer.hpp"
#include "objclear/toynet.hpp"

using namespace objclear;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << "  " << name << "  (" << detail << ")"
              << std::endl;
    if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

std::string run_capture(const std::string& cmd, int& status) {
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        status = -1;
        return out;
    }
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
    status = pclose(pipe);
    return out;
}

// --- 1 ---------------------------------------------------------------------

void round_trip() {
    const auto t0 = Clock::now();
    const auto scenes = render_corpus(101, 200);
    double worst = 0.0;
    std::size_t checked = 0;
    for (const ProceduralScene& s : scenes) {
        const AnnotationSet a = annotate(s.pair);
        const ForegroundAsset asset = extract_alpha(s.pair, a, 1e-6, s.direction_bin);
        const CompositeSample out =
            compose(BackgroundScene::from_image(s.pair.ground_truth), asset, asset.origin_row, asset.origin_col, 1.0);
        const FullFrameLayer layer = compute_alpha_layer(s.pair, a, 1e-6);
        for (int r = 0; r < s.pair.input.height(); ++r)
            for (int c = 0; c < s.pair.input.width(); ++c)
                for (int ch = 0; ch < 3; ++ch) {
                    if (std::abs(layer.alpha.at(r, c, ch)) >= 1.0 - 1e-6 && a.object_mask.at(r, c) < 0.5) continue;
                    worst = std::max(worst, std::abs(out.composite.at(r, c, ch) - s.pair.input.at(r, c, ch)));
                    ++checked;
                }
    }
    const double secs = seconds_since(t0);
    report(1, "round-trip identity", worst <= 2e-3 && secs < 10.0 && scenes.size() >= 100,
           std::to_string(scenes.size()) + " pairs, max error " + fmt(worst) + ", " + fmt(secs) + " s");
}

// --- 2 ---------------------------------------------------------------------

void mask_loss_extremes() {
    using namespace toynet;
    Mask fg(kImageSide, kImageSide);
    for (int r = 8; r < 24; ++r)
        for (int c = 4; c < 20; ++c) fg.at(r, c) = 1.0;
    const Mask grid = grid_mask(fg);
    auto with_slice = [&](auto value) {
        AttentionMap a;
        for (int p = 0; p < kPositions; ++p) {
            const double v = value(grid.at(p / kGridSide, p % kGridSide) > 0.5);
            a.weights[static_cast<std::size_t>(p * kTokens + kTokens - 1)] = v;
            for (int t = 0; t < kTokens - 1; ++t) a.weights[static_cast<std::size_t>(p * kTokens + t)] = (1.0 - v) / 4;
        }
        return mask_loss(a, fg).value;
    };
    const double sep = with_slice([](bool on) { return on ? 1.0 : 0.0; });
    const double flat = with_slice([](bool) { return 0.37; });
    const double inv = with_slice([](bool on) { return on ? 0.0 : 1.0; });
    const bool ok = std::abs(sep + 1.0) <= 1e-9 && std::abs(flat) <= 1e-9 && std::abs(inv - 1.0) <= 1e-9;
    report(2, "mask loss extremes", ok, "separated " + fmt(sep) + ", constant " + fmt(flat) + ", inverted " + fmt(inv));
}

// --- 3 ---------------------------------------------------------------------

void gradients(const std::vector<toynet::TrainItem>& items) {
    using namespace toynet;
    const auto t0 = Clock::now();
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.seed = 31;
    cfg.workers = default_workers();
    Trainer trainer(Params::initialize(31), cfg);

    const std::vector<TrainItem> probe(items.begin(), items.begin() + 2);
    const auto draws = trainer.draw_items(probe.size());
    const double at_init = gradient_check(trainer.params(), probe, draws, cfg.lambda_mask, 200, 5).max_rel_error;

    for (int step = 0; step < 100; ++step) {
        const std::size_t start = (static_cast<std::size_t>(step) * 8) % (items.size() - 8);
        trainer.train_step(std::span(items).subspan(start, 8));
    }
    const double trained = gradient_check(trainer.params(), probe, draws, cfg.lambda_mask, 200, 6).max_rel_error;
    const double secs = seconds_since(t0);
    report(3, "gradient check", at_init < 1e-3 && trained < 1e-3 && secs < 120.0,
           "init " + fmt(at_init) + ", after 100 steps " + fmt(trained) + ", " + fmt(secs) + " s");
}

// --- 4, 5, 6 ---------------------------------------------------------------

void training_and_fusion() {
    const auto t0 = Clock::now();
    DemoOptions opts;
    opts.seed = 1;
    opts.workers = default_workers();
    const DemoResult trained = run_demo(opts);
    DemoOptions control = opts;
    control.train.lambda_mask = 0.0;
    const DemoResult baseline = run_demo(control);
    const double secs = seconds_since(t0);

    // 4: exact copies, then the directional background check
    const ProceduralScene s = render_scene(9, 0);
    const HeldoutSample& first = trained.heldout.samples.front();
    const Mask zero = attention_to_mask(Mask(8, 8, 0.0), 32, 32);
    const Mask ones = attention_to_mask(Mask(8, 8, 1.0), 32, 32);
    const bool exact = fuse(s.pair.input, first.generated, zero) == s.pair.input &&
                       fuse(s.pair.input, first.generated, ones) == first.generated;
    int better = 0;
    for (const HeldoutSample& h : trained.heldout.samples) better += h.psnr_bg_fused >= h.psnr_bg_raw;
    const int n = static_cast<int>(trained.heldout.samples.size());
    report(4, "attention-guided fusion", exact && n == 50 && better * 10 >= n * 9,
           std::string("exact copies ") + (exact ? "yes" : "no") + ", psnr_bg fused >= raw on " +
               std::to_string(better) + "/" + std::to_string(n) + ", mean psnr_bg " +
               fmt(trained.heldout.fused_report.mean_psnr_bg) + " vs " + fmt(trained.heldout.raw_report.mean_psnr_bg) +
               " dB");

    // 5
    const double mse_first = trained.epoch_mse.front(), mse_last = trained.epoch_mse.back();
    const double recall = trained.heldout.median_recall_last;
    const double control_recall = baseline.heldout.median_recall_last;
    report(5, "toy training efficacy",
           mse_last <= 0.5 * mse_first && recall >= 0.8 && control_recall < recall && secs < 900.0,
           "mse " + fmt(mse_first) + " -> " + fmt(mse_last) + ", median recall " + fmt(recall) + ", lambda=0 control " +
               fmt(control_recall) + ", " + fmt(secs) + " s for both runs");

    // 6
    const double r1 = trained.heldout.median_recall_first;
    report(6, "attention progression", recall >= r1, "median recall step 1 " + fmt(r1) + ", step 20 " + fmt(recall));
}

// --- 7 ---------------------------------------------------------------------

void psnr_oracle() {
    const Image a(32, 32, 0.25), b(32, 32, 0.25 + 1.0 / 255.0);
    const double p = psnr(a, b);
    Rng rng(77);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        Image x(24, 24), y(24, 24);
        for (double& v : x.values()) v = rng.uniform();
        for (double& v : y.values()) v = rng.uniform();
        Mask fg(24, 24);
        for (double& v : fg.values()) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
        fg.at(0, 0) = 0.0;
        double sum = 0.0;
        int count = 0;
        for (int r = 0; r < 24; ++r)
            for (int c = 0; c < 24; ++c)
                if (fg.at(r, c) == 0.0)
                    for (int ch = 0; ch < 3; ++ch) {
                        const double d = x.at(r, c, ch) - y.at(r, c, ch);
                        sum += d * d;
                        ++count;
                    }
        const double brute = 10.0 * std::log10(1.0 / (sum / count));
        worst = std::max(worst, std::abs(psnr_bg(x, y, fg) - brute));
    }
    report(7, "psnr oracle", std::abs(p - 48.13) <= 0.01 && worst <= 1e-9,
           "uniform offset " + fmt(p) + " dB, psnr_bg max deviation " + fmt(worst));
}

// --- 8 ---------------------------------------------------------------------

void determinism() {
    const std::string base = std::string(OBJCLEAR_CLI_PATH) +
                             " demo --seed 11 --train-scenes 48 --test-scenes 10 --epochs 3 --workers ";
    int s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    const std::string a = run_capture(base + "1", s1);
    const std::string b = run_capture(base + "1", s2);
    const std::string c = run_capture(base + "4", s3);
    const std::string d = run_capture(base + "4", s4);
    const bool ok = s1 == 0 && s2 == 0 && s3 == 0 && s4 == 0 && !a.empty() && a == b && a == c && a == d;
    report(8, "demo determinism", ok,
           std::to_string(a.size()) + " bytes of report JSON, identical across 2 runs x workers {1, 4}: " +
               (ok ? "yes" : "no"));
}

}  // namespace

int main() {
    try {
        round_trip();
        mask_loss_extremes();
        const auto scenes = render_corpus(303, 64);
        gradients(annotated_training_set(scenes, {}, default_workers()));
        training_and_fusion();
        psnr_oracle();
        determinism();
    } catch (const std::exception& e) {
        std::cout << "FAIL  acceptance harness aborted: " << e.what() << std::endl;
        return 1;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
