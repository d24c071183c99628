#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bcseg/augment.hpp"
#include "bcseg/backend.hpp"
#include "bcseg/case.hpp"
#include "bcseg/error.hpp"
#include "bcseg/patch_sampler.hpp"
#include "bcseg/session.hpp"

namespace bcseg {

inline constexpr double kDiceEpsilon = 1e-5;

/// 1 - mean over foreground channels 1..C-1 of (2 sum p g + eps) / (sum p + sum g + eps)
/// for one sample laid out C x N. Throws DataError on shape mismatch.
[[nodiscard]] double soft_dice_loss(std::span<const float> probs, std::span<const std::uint8_t> onehot,
                                    std::size_t channels);

/// Mean of soft_dice_loss over the batch (B x C x S^3 tensors).
[[nodiscard]] double soft_dice_loss(const protocol::TensorF32& probs, const protocol::TensorU8& onehot);

enum class TrainMode { joint, separate };

/// Batch size used when the config leaves it at 0: unet 4, r2unet 2, unetpp 4, threshold 4.
[[nodiscard]] int default_batch_size(std::string_view model_name);

struct TrainConfig {
    TrainMode mode = TrainMode::joint;
    /// Separate-mode class. When unset, cross-validation trains one model per tissue.
    std::optional<ClassId> target;
    std::string model_name = "unet";
    int batch_size = 0;  // 0 = model default
    double initial_lr = 1e-4;
    int plateau_patience = 3;
    double lr_factor = 0.5;
    int early_stop_patience = 10;
    int max_epochs = 100;
    double improvement_threshold = 1e-6;
    bool augment = true;
    int workers = 1;
    std::uint64_t seed = 1;

    void validate() const;
    [[nodiscard]] int effective_batch_size() const;
    /// Throws UsageError in separate mode without a target.
    [[nodiscard]] HelloMode hello_mode() const;
};

struct ScheduleState {
    double current_lr = 0.0;
    double best_val_metric = -std::numeric_limits<double>::infinity();
    /// Non-improving epochs since the last improvement (early stop counter).
    int epochs_since_improvement = 0;
    /// Non-improving epochs since the last improvement or decay.
    int plateau_epochs = 0;
    int decays = 0;
    bool improved = false;
    bool stop_flag = false;

    bool operator==(const ScheduleState&) const = default;
};

[[nodiscard]] ScheduleState initial_schedule(const TrainConfig& cfg);
[[nodiscard]] ScheduleState schedule_step(ScheduleState state, double val_metric, const TrainConfig& cfg);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_metric = 0.0;
    /// Aggregated hard Dice per class over the validation patches; NaN for classes outside the mode.
    std::array<double, kClassCount> val_dice{};
    double lr = 0.0;
    double wall_seconds = 0.0;
};

void write_epoch_log_csv(std::ostream& out, std::span<const EpochLog> log);

struct TrainingResult {
    std::optional<std::string> checkpoint;
    std::vector<EpochLog> log;
    ScheduleState schedule;
    int best_epoch = -1;
};

/// Backend failure during training; carries the last checkpoint written.
class TrainingFailure : public BackendError {
public:
    TrainingFailure(const std::string& message, std::optional<std::string> checkpoint)
        : BackendError(message), checkpoint_(std::move(checkpoint)) {}
    [[nodiscard]] const std::optional<std::string>& checkpoint() const noexcept { return checkpoint_; }

private:
    std::optional<std::string> checkpoint_;
};

struct TrainingInputs {
    /// Isotropic cases.
    std::span<const Case> train;
    std::span<const Case> validation;
    SamplerConfig sampler;
    AugmentSpec augment;
    /// Directory where checkpoint paths are allocated; empty disables checkpoints.
    std::filesystem::path checkpoint_dir;
};

/// Epoch loop: stream and augment patches, dispatch batches, validate on a
/// fixed un-augmented patch set, step the schedule, checkpoint on improvement.
[[nodiscard]] TrainingResult run_training(const TrainingInputs& inputs, const TrainConfig& cfg,
                                          BackendHandle& backend);

/// Aggregated hard Dice of predicted vs true labels over a patch set, per class.
struct DiceAccumulator {
    std::array<std::int64_t, kClassCount> intersection{};
    std::array<std::int64_t, kClassCount> pred{};
    std::array<std::int64_t, kClassCount> truth{};

    void add(const LabelMask& predicted, const LabelMask& truth_mask);
    /// 1 when the class is absent from both.
    [[nodiscard]] double dice(ClassId c) const noexcept;
};

[[nodiscard]] std::string_view train_mode_name(TrainMode m) noexcept;

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace bcseg
