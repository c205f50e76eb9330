#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "objclear/metrics.hpp"
#include "objclear/raster.hpp"
#include "objclear/rng.hpp"

namespace objclear::toynet {

// Architecture constants.
inline constexpr int kImageSide = 32;
inline constexpr int kInputChannels = 7;  // z_t (3) + I_in (3) + M_o (1)
inline constexpr int kEnc1Channels = 16;
inline constexpr int kModelDim = 32;
inline constexpr int kGridSide = 8;
inline constexpr int kPositions = kGridSide * kGridSide;
inline constexpr int kTextTokens = 4;
inline constexpr int kTokens = kTextTokens + 1;
inline constexpr int kObjEnc1Channels = 8;
inline constexpr int kObjEnc2Channels = 16;
inline constexpr int kDec1Channels = 16;
inline constexpr int kLevels = 20;
inline constexpr char kPrompt[] = "remove the instance of";

/// One named learnable array.
struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
};

/// Every learnable array of the network, in declaration order.
class Params {
public:
    /// Zero-filled arrays with the fixed architecture shapes.
    Params();

    /// He-style random initialization.
    static Params initialize(std::uint64_t seed);

    std::span<Tensor> tensors() noexcept { return tensors_; }
    std::span<const Tensor> tensors() const noexcept { return tensors_; }
    Tensor& get(std::string_view name);
    const Tensor& get(std::string_view name) const;

    std::size_t scalar_count() const noexcept;
    /// Flat index into the concatenation of all tensors.
    double& scalar(std::size_t flat_index);
    double scalar(std::size_t flat_index) const;

    void fill(double v);
    /// this += scale * other
    void axpy(double scale, const Params& other);
    bool all_finite() const noexcept;
    bool operator==(const Params& other) const;

private:
    std::vector<Tensor> tensors_;
};

/// Cumulative signal fractions: linear from 0.9999 at t = 1 to 0.02 at t = kLevels.
struct NoiseSchedule {
    std::array<double, kLevels> alpha_bar{};

    NoiseSchedule();
    /// t in [1, kLevels].
    double at(int t) const;
};

/// Cross-attention weights: kPositions query rows x kTokens columns.
struct AttentionMap {
    std::vector<double> weights = std::vector<double>(kPositions * kTokens, 0.0);

    double at(int position, int token) const { return weights[static_cast<std::size_t>(position * kTokens + token)]; }
    /// Object-token column reshaped to kGridSide x kGridSide.
    Mask object_slice() const;
    /// Largest |row sum - 1|.
    double max_row_deviation() const;
};

/// Stacked cross-attention guidance: 4 text tokens then the object (or null) token.
struct Guidance {
    std::vector<double> tokens = std::vector<double>(kTokens * kModelDim, 0.0);
    bool dropped = false;
};

Guidance build_guidance(const Image& input, const Mask& object_mask, const Params& params, bool drop);

struct ForwardResult {
    Image x0_pred;
    AttentionMap attn;
};

/// z_t is given as an Image-shaped array (values unbounded).
ForwardResult forward(const Image& z_t, const Image& input, const Mask& object_mask, int t,
                      const Guidance& guidance, const Params& params);

struct MaskLossResult {
    double value = 0.0;
    bool degenerate = false;
    /// d value / d A_obj at each grid cell (zero when degenerate).
    std::vector<double> grad = std::vector<double>(kPositions, 0.0);
};

/// M_fg reduced to the attention grid: area mean, then >= 0.5.
Mask grid_mask(const Mask& object_effect_mask);

/// mean(A over background cells) - mean(A over foreground cells).
MaskLossResult mask_loss(const AttentionMap& attn, const Mask& object_effect_mask);

struct TrainItem {
    Image input;
    Image ground_truth;
    Mask object_mask;
    Mask object_effect_mask;
};

/// Per-item randomness of a training step, drawn up front so that a probe can
/// be replayed exactly.
struct ItemDraw {
    int t = 1;
    Image noise;
    bool drop = false;
};

struct TrainConfig {
    double lambda_mask = 0.1;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int epochs = 1;
    int batch_size = 8;
    double guidance_drop_prob = 0.1;
    double cfg_scale = 1.0;
    std::uint64_t seed = 0;
    int workers = 1;

    void validate() const;
};

struct LossReport {
    double mse = 0.0;
    double mask_loss = 0.0;
    double total = 0.0;
    int degenerate_masks = 0;
};

/// Batch-mean loss with analytic gradients (grads is overwritten).
LossReport loss_and_grad(const Params& params, std::span<const TrainItem> batch,
                         std::span<const ItemDraw> draws, double lambda_mask, Params* grads,
                         int workers = 1);

/// SGD with momentum (v = mu v + g; p -= lr v).
class Trainer {
public:
    Trainer(Params params, TrainConfig cfg);

    LossReport train_step(std::span<const TrainItem> batch);
    /// Runs cfg.epochs passes over the data with a seeded shuffle; calls
    /// `on_step` after every step when given.
    std::vector<LossReport> train(std::span<const TrainItem> data,
                                  const std::function<void(int step, int epoch, const LossReport&)>& on_step = {});

    const Params& params() const noexcept { return params_; }
    const TrainConfig& config() const noexcept { return cfg_; }
    int steps_taken() const noexcept { return step_; }

    std::vector<ItemDraw> draw_items(std::size_t count);

private:
    Params params_;
    Params velocity_;
    TrainConfig cfg_;
    int step_ = 0;
};

struct GradientCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::vector<std::size_t> checked;
};

/// Compares analytic gradients with central differences on `count` random
/// scalars. `tamper` may edit the analytic gradients before comparison.
GradientCheckResult gradient_check(const Params& params, std::span<const TrainItem> probe,
                                   std::span<const ItemDraw> draws, double lambda_mask, int count,
                                   std::uint64_t seed, double step = 1e-4,
                                   const std::function<void(Params&)>& tamper = {});

struct InferResult {
    Image output;
    AttentionMap attn_final;
    /// Conditional-branch attention at every step, first step first.
    std::vector<AttentionMap> attn_steps;
    int null_evaluations = 0;
};

/// Deterministic denoising from seeded Gaussian noise over `steps` levels.
InferResult infer(const Image& input, const Mask& object_mask, const Params& params, int steps,
                  double cfg_scale, std::uint64_t seed);

/// Attention slice upsampled bilinearly to the mask size, scored at 0.5.
MaskScores attention_scores(const AttentionMap& attn, const Mask& object_effect_mask);

struct CheckpointMeta {
    TrainConfig config;
    std::uint64_t init_seed = 0;
    int steps = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Params& params, const CheckpointMeta& meta);
Params load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace objclear::toynet
