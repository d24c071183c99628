#include "bcseg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"

namespace bcseg {

double soft_dice_loss(std::span<const float> probs, std::span<const std::uint8_t> onehot, std::size_t channels) {
    if (channels < 2 || probs.size() != onehot.size() || probs.size() % channels != 0) {
        throw DataError("soft_dice_loss: probability and one-hot shapes differ");
    }
    const std::size_t n = probs.size() / channels;
    double score = 0.0;
    for (std::size_t c = 1; c < channels; ++c) {
        double inter = 0.0;
        double sum_p = 0.0;
        double sum_g = 0.0;
        for (std::size_t i = c * n; i < (c + 1) * n; ++i) {
            const double p = probs[i];
            const double g = onehot[i];
            inter += p * g;
            sum_p += p;
            sum_g += g;
        }
        score += (2.0 * inter + kDiceEpsilon) / (sum_p + sum_g + kDiceEpsilon);
    }
    return 1.0 - score / static_cast<double>(channels - 1);
}

double soft_dice_loss(const protocol::TensorF32& probs, const protocol::TensorU8& onehot) {
    if (probs.dims != onehot.dims || probs.dims.size() < 3 || probs.data.size() != probs.element_count() ||
        onehot.data.size() != onehot.element_count()) {
        throw DataError("soft_dice_loss: probability and one-hot shapes differ");
    }
    const std::size_t batch = probs.dims[0];
    if (batch == 0) {
        return 0.0;
    }
    const std::size_t per = probs.data.size() / batch;
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        total += soft_dice_loss(std::span(probs.data).subspan(b * per, per),
                                std::span(onehot.data).subspan(b * per, per), probs.dims[1]);
    }
    return total / static_cast<double>(batch);
}

std::string_view train_mode_name(TrainMode m) noexcept {
    return m == TrainMode::joint ? "joint" : "separate";
}

int default_batch_size(std::string_view model_name) {
    if (model_name == "unet" || model_name == "unetpp" || model_name == "threshold") {
        return 4;
    }
    if (model_name == "r2unet") {
        return 2;
    }
    throw UsageError("unknown model '" + std::string(model_name) + "' (expected unet, r2unet, unetpp, threshold)");
}

void TrainConfig::validate() const {
    (void)default_batch_size(model_name);
    if (batch_size < 0) {
        throw UsageError("train: batch_size must be >= 1 (0 selects the model default)");
    }
    if (!(initial_lr > 0.0)) {
        throw UsageError("train: initial_lr must be positive");
    }
    if (!(lr_factor > 0.0 && lr_factor < 1.0)) {
        throw UsageError("train: lr_factor must lie in (0, 1)");
    }
    if (plateau_patience < 1 || early_stop_patience < 1) {
        throw UsageError("train: patience values must be >= 1");
    }
    if (max_epochs < 1) {
        throw UsageError("train: max_epochs must be >= 1");
    }
    if (target && *target == ClassId::background) {
        throw UsageError("train: the separate-mode class must be a tissue");
    }
    if (workers < 0) {
        throw UsageError("train: workers must be >= 0");
    }
}

int TrainConfig::effective_batch_size() const {
    return batch_size > 0 ? batch_size : default_batch_size(model_name);
}

HelloMode TrainConfig::hello_mode() const {
    if (mode == TrainMode::separate && !target) {
        throw UsageError("train: separate mode needs a tissue class for a single model");
    }
    return mode == TrainMode::separate ? HelloMode{target} : HelloMode{};
}

ScheduleState initial_schedule(const TrainConfig& cfg) {
    ScheduleState s;
    s.current_lr = cfg.initial_lr;
    return s;
}

ScheduleState schedule_step(ScheduleState s, double val_metric, const TrainConfig& cfg) {
    s.improved = val_metric - s.best_val_metric >= cfg.improvement_threshold;
    if (s.improved) {
        s.best_val_metric = val_metric;
        s.epochs_since_improvement = 0;
        s.plateau_epochs = 0;
    } else {
        ++s.epochs_since_improvement;
        ++s.plateau_epochs;
        if (s.plateau_epochs >= cfg.plateau_patience) {
            s.current_lr *= cfg.lr_factor;
            s.plateau_epochs = 0;
            ++s.decays;
        }
    }
    s.stop_flag = s.epochs_since_improvement >= cfg.early_stop_patience;
    return s;
}

void DiceAccumulator::add(const LabelMask& predicted, const LabelMask& truth_mask) {
    if (predicted.size() != truth_mask.size()) {
        throw DataError("dice: mask sizes differ");
    }
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const auto p = predicted[i];
        const auto t = truth_mask[i];
        ++pred[p];
        ++truth[t];
        if (p == t) {
            ++intersection[p];
        }
    }
}

double DiceAccumulator::dice(ClassId c) const noexcept {
    const auto k = code(c);
    const auto denom = pred[k] + truth[k];
    return denom == 0 ? 1.0 : 2.0 * static_cast<double>(intersection[k]) / static_cast<double>(denom);
}

void write_epoch_log_csv(std::ostream& out, std::span<const EpochLog> log) {
    out << "epoch,train_loss,val_metric";
    for (const ClassId c : kTissues) {
        out << ",val_dice_" << class_name(c);
    }
    out << ",lr,wall_seconds\n";
    out.precision(17);
    for (const auto& e : log) {
        out << e.epoch << ',' << e.train_loss << ',' << e.val_metric;
        for (const ClassId c : kTissues) {
            out << ',';
            if (!std::isnan(e.val_dice[code(c)])) {
                out << e.val_dice[code(c)];
            }
        }
        out << ',' << e.lr << ',' << e.wall_seconds << '\n';
    }
}

namespace {

using Clock = std::chrono::steady_clock;

// Stacks per-record tensors into B x C x S^3 batch tensors.
struct BatchBuilder {
    HelloMode mode;
    protocol::TrainBatch batch;
    std::uint32_t count = 0;

    void add(const PatchRecord& r) {
        auto image = normalized_tensor(r.image);
        auto onehot = onehot_labels(r.mask, mode);
        if (count == 0) {
            batch.images.dims = image.dims;
            batch.images.dims.insert(batch.images.dims.begin(), 0);
            batch.onehot.dims = onehot.dims;
            batch.onehot.dims.insert(batch.onehot.dims.begin(), 0);
        }
        batch.images.data.insert(batch.images.data.end(), image.data.begin(), image.data.end());
        batch.onehot.data.insert(batch.onehot.data.end(), onehot.data.begin(), onehot.data.end());
        ++count;
        batch.images.dims[0] = count;
        batch.onehot.dims[0] = count;
    }
    void clear() {
        batch = {};
        count = 0;
    }
};

struct Validation {
    double metric = 0.0;
    std::array<double, kClassCount> dice{};
};

Validation validate(const std::vector<PatchRecord>& patches, const TrainConfig& cfg, BackendHandle& backend) {
    const HelloMode mode = cfg.hello_mode();
    DiceAccumulator acc;
    for (const auto& r : patches) {
        const auto probs = backend.infer(normalized_tensor(r.image));
        auto predicted = patch_labels(probs, mode, r.mask.geometry());
        if (mode.target) {
            // Score only the target class against a binary truth.
            LabelMask truth(r.mask.geometry(), 0);
            for (std::size_t i = 0; i < truth.size(); ++i) {
                truth[i] = r.mask[i] == code(*mode.target) ? code(*mode.target) : 0;
            }
            acc.add(predicted, truth);
        } else {
            acc.add(predicted, r.mask);
        }
    }
    Validation v;
    v.dice.fill(std::nan(""));
    double sum = 0.0;
    int n = 0;
    for (const ClassId c : kTissues) {
        if (mode.target && c != *mode.target) {
            continue;
        }
        v.dice[code(c)] = acc.dice(c);
        sum += v.dice[code(c)];
        ++n;
    }
    v.metric = sum / n;
    return v;
}

std::vector<PatchRecord> validation_patches(const TrainingInputs& in, const TrainConfig& cfg) {
    SamplerConfig scfg = in.sampler;
    scfg.seed = derive_seed(cfg.seed, {hash_string("validation"), in.sampler.seed});
    const auto grids = summarize_cases(in.validation, scfg);
    EpochStream stream(in.validation, grids, scfg, 0, StreamOptions{1, 1, std::nullopt});
    std::vector<PatchRecord> out;
    while (auto r = stream.next()) {
        out.push_back(std::move(*r));
    }
    return out;
}

}  // namespace

TrainingResult run_training(const TrainingInputs& in, const TrainConfig& cfg, BackendHandle& backend) {
    cfg.validate();
    if (in.train.empty() || in.validation.empty()) {
        throw DataError("run_training: training and validation sets must be nonempty");
    }
    const HelloMode mode = cfg.hello_mode();
    if (backend.class_count() != mode.class_count()) {
        throw BackendError("run_training: backend session has " + std::to_string(backend.class_count()) +
                           " classes, the mode needs " + std::to_string(mode.class_count()));
    }
    if (static_cast<std::int64_t>(backend.patch_side()) != in.sampler.patch_side()) {
        throw BackendError("run_training: backend patch side differs from the sampler's");
    }
    const auto grids = summarize_cases(in.train, in.sampler);
    if (mode.target) {
        std::int64_t total = 0;
        for (const auto& g : grids) {
            total += g.totals[code(*mode.target)];
        }
        if (total == 0) {
            throw DataError("run_training: " + std::string(class_name(*mode.target)) +
                            " is absent from every training case");
        }
    }

    TrainingResult result;
    result.schedule = initial_schedule(cfg);
    SamplerConfig scfg = in.sampler;
    scfg.seed = derive_seed(cfg.seed, {hash_string("train"), in.sampler.seed});
    StreamOptions options;
    options.workers = cfg.workers;
    if (cfg.augment) {
        options.augment = in.augment;
    }

    try {
        const auto val_patches = validation_patches(in, cfg);
        backend.set_learning_rate(result.schedule.current_lr);
        const std::size_t batch_size = static_cast<std::size_t>(cfg.effective_batch_size());
        for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
            const auto started = Clock::now();
            EpochStream stream(in.train, grids, scfg, static_cast<std::uint64_t>(epoch), options);
            BatchBuilder builder{mode, {}, 0};
            double loss_sum = 0.0;
            int batches = 0;
            auto flush = [&] {
                if (builder.count > 0) {
                    loss_sum += backend.train(builder.batch);
                    ++batches;
                    builder.clear();
                }
            };
            while (auto record = stream.next()) {
                builder.add(*record);
                if (builder.count == batch_size) {
                    flush();
                }
            }
            flush();

            const Validation v = validate(val_patches, cfg, backend);
            const double lr_used = result.schedule.current_lr;
            result.schedule = schedule_step(result.schedule, v.metric, cfg);

            EpochLog entry;
            entry.epoch = epoch;
            entry.train_loss = batches > 0 ? loss_sum / batches : 0.0;
            entry.val_metric = v.metric;
            entry.val_dice = v.dice;
            entry.lr = lr_used;

            if (result.schedule.improved) {
                result.best_epoch = epoch;
                if (!in.checkpoint_dir.empty()) {
                    const auto path = (in.checkpoint_dir / "best.ckpt").string();
                    backend.save_checkpoint(path);
                    result.checkpoint = path;
                }
            }
            if (result.schedule.current_lr != lr_used) {
                backend.set_learning_rate(result.schedule.current_lr);
            }
            entry.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
            result.log.push_back(entry);
            if (result.schedule.stop_flag) {
                break;
            }
        }
    } catch (const BackendError& e) {
        throw TrainingFailure(std::string(e.what()) + (result.checkpoint ? " (last checkpoint: " + *result.checkpoint + ")"
                                                                         : " (no checkpoint written)"),
                              result.checkpoint);
    }
    return result;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"mode", train_mode_name(c.mode)},
                       {"model", c.model_name},
                       {"batch_size", c.batch_size},
                       {"initial_lr", c.initial_lr},
                       {"plateau_patience", c.plateau_patience},
                       {"lr_factor", c.lr_factor},
                       {"early_stop_patience", c.early_stop_patience},
                       {"max_epochs", c.max_epochs},
                       {"improvement_threshold", c.improvement_threshold},
                       {"augment", c.augment},
                       {"workers", c.workers},
                       {"seed", c.seed}};
    if (c.target) {
        j["class"] = class_name(*c.target);
    }
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    static const char* const kKeys[] = {"mode",     "class",  "model",   "batch_size",          "initial_lr",
                                        "plateau_patience",   "lr_factor", "early_stop_patience", "max_epochs",
                                        "improvement_threshold", "augment", "workers",            "seed"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
            throw UsageError("train: unknown key '" + key + "'");
        }
    }
    const TrainConfig d;
    const std::string mode = j.value("mode", std::string("joint"));
    if (mode == "joint") {
        c.mode = TrainMode::joint;
    } else if (mode == "separate") {
        c.mode = TrainMode::separate;
    } else {
        throw UsageError("train: mode must be joint or separate");
    }
    c.target = j.contains("class") ? std::optional(parse_class(j.at("class").get<std::string>())) : std::nullopt;
    c.model_name = j.value("model", d.model_name);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.initial_lr = j.value("initial_lr", d.initial_lr);
    c.plateau_patience = j.value("plateau_patience", d.plateau_patience);
    c.lr_factor = j.value("lr_factor", d.lr_factor);
    c.early_stop_patience = j.value("early_stop_patience", d.early_stop_patience);
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.improvement_threshold = j.value("improvement_threshold", d.improvement_threshold);
    c.augment = j.value("augment", d.augment);
    c.workers = j.value("workers", d.workers);
    c.seed = j.value("seed", d.seed);
    c.validate();
}

}  // namespace bcseg
