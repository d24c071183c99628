#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"
#include "bcseg/phantom.hpp"
#include "bcseg/session.hpp"
#include "bcseg/threshold_backend.hpp"
#include "bcseg/training.hpp"
#include "unit/test_support.hpp"

namespace bcseg {
namespace {

using namespace protocol;

TEST(SoftDice, PerfectMatchIsZero) {
    const std::vector<float> p = {1, 0, 0, 1, 0, 0, 0, 0, 1};
    const std::vector<std::uint8_t> g = {1, 0, 0, 1, 0, 0, 0, 0, 1};
    EXPECT_NEAR(soft_dice_loss(p, g, 3), 0.0, 1e-12);
}

TEST(SoftDice, ClosedFormValues) {
    const double e = kDiceEpsilon;
    // C = 2, N = 2. Channel 1: p = (0.5, 0.5), g = (1, 0).
    std::vector<float> p = {0.5F, 0.5F, 0.5F, 0.5F};
    std::vector<std::uint8_t> g = {0, 1, 1, 0};
    EXPECT_NEAR(soft_dice_loss(p, g, 2), 1.0 - (1.0 + e) / (2.0 + e), 1e-12);
    // Completely wrong: p puts all mass on channel 0, truth on channel 1.
    p = {1, 1, 0, 0};
    g = {0, 0, 1, 1};
    EXPECT_NEAR(soft_dice_loss(p, g, 2), 1.0 - e / (2.0 + e), 1e-12);
    // Class absent from both prediction and truth scores as perfect.
    p = {1, 1, 0, 0};
    g = {1, 1, 0, 0};
    EXPECT_NEAR(soft_dice_loss(p, g, 2), 0.0, 1e-12);
    // C = 3: channel 1 perfect, channel 2 half overlap.
    p = {0, 0, 1, 0, 0, 1};
    g = {0, 0, 1, 0, 0, 1};
    EXPECT_NEAR(soft_dice_loss(p, g, 3), 0.0, 1e-12);
    p = {0, 0, 0, 0, 1, 1};
    g = {0, 0, 0, 0, 1, 0};
    const double ch2 = (2.0 + e) / (3.0 + e);
    // channel 1 is empty in both (score 1)
    EXPECT_NEAR(soft_dice_loss(p, g, 3), 1.0 - (1.0 + ch2) / 2.0, 1e-12);
}

TEST(SoftDice, BatchMeanAndShapeErrors) {
    TensorF32 p{{2, 2, 1, 1, 2}, {0.5F, 0.5F, 0.5F, 0.5F, 1, 1, 0, 0}};
    TensorU8 g{{2, 2, 1, 1, 2}, {0, 1, 1, 0, 1, 1, 0, 0}};
    const double e = kDiceEpsilon;
    EXPECT_NEAR(soft_dice_loss(p, g), 0.5 * (1.0 - (1.0 + e) / (2.0 + e)), 1e-12);
    g.data.pop_back();
    EXPECT_THROW((void)soft_dice_loss(p, g), DataError);
}

TEST(SoftDice, BoundedOnRandomInputs) {
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const std::size_t c = 2 + rng.below(5);
        const std::size_t n = 1 + rng.below(30);
        std::vector<float> p(c * n);
        std::vector<std::uint8_t> g(c * n, 0);
        for (std::size_t v = 0; v < n; ++v) {
            double sum = 0;
            for (std::size_t k = 0; k < c; ++k) sum += (p[k * n + v] = static_cast<float>(rng.uniform()));
            for (std::size_t k = 0; k < c; ++k) p[k * n + v] = static_cast<float>(p[k * n + v] / sum);
            g[rng.below(c) * n + v] = 1;
        }
        const double l = soft_dice_loss(p, g, c);
        ASSERT_GE(l, 0.0);
        ASSERT_LE(l, 1.0 + 1e-6);
    }
}

TEST(Schedule, HalvesAfterThreeFlatEpochs) {
    const TrainConfig cfg;
    ScheduleState s = initial_schedule(cfg);
    s = schedule_step(s, 0.5, cfg);
    EXPECT_TRUE(s.improved);
    for (int i = 0; i < 2; ++i) {
        s = schedule_step(s, 0.5, cfg);
        EXPECT_EQ(s.current_lr, 1e-4);
    }
    s = schedule_step(s, 0.5, cfg);
    EXPECT_EQ(s.current_lr, 5e-5);
    EXPECT_EQ(s.epochs_since_improvement, 3);
    EXPECT_EQ(s.plateau_epochs, 0);
}

TEST(Schedule, IncreasingNeverDecaysOrStops) {
    const TrainConfig cfg;
    ScheduleState s = initial_schedule(cfg);
    for (int i = 0; i < 50; ++i) {
        s = schedule_step(s, 0.01 * i, cfg);
        ASSERT_EQ(s.current_lr, 1e-4);
        ASSERT_FALSE(s.stop_flag);
    }
}

TEST(Schedule, TenFlatEpochsStop) {
    const TrainConfig cfg;
    ScheduleState s = schedule_step(initial_schedule(cfg), 0.7, cfg);
    for (int i = 1; i <= 10; ++i) {
        ASSERT_FALSE(s.stop_flag);
        s = schedule_step(s, 0.7 + 5e-7, cfg);  // below the improvement threshold
    }
    EXPECT_TRUE(s.stop_flag);
    EXPECT_EQ(s.decays, 3);
    EXPECT_EQ(s.current_lr, 1e-4 * 0.125);
}

TEST(Schedule, MatchesReferenceTraces) {
    const auto doc = nlohmann::json::parse(testing::read_file(testing::data_dir() / "schedule_traces.json"));
    ASSERT_EQ(doc.at("traces").size(), 20u);
    const TrainConfig cfg;
    int index = 0;
    for (const auto& trace : doc.at("traces")) {
        ScheduleState s = initial_schedule(cfg);
        const auto& metrics = trace.at("metrics");
        const auto& expected = trace.at("expected");
        for (std::size_t i = 0; i < expected.size(); ++i) {
            s = schedule_step(s, metrics[i].get<double>(), cfg);
            const auto& e = expected[i];
            ASSERT_EQ(s.current_lr, e.at("lr").get<double>()) << "trace " << index << " step " << i;
            ASSERT_EQ(s.best_val_metric, e.at("best").get<double>());
            ASSERT_EQ(s.epochs_since_improvement, e.at("stale").get<int>());
            ASSERT_EQ(s.stop_flag, e.at("stop").get<bool>());
        }
        ++index;
    }
}

TEST(Schedule, LrIsExactPowerOfHalf) {
    TrainConfig cfg;
    cfg.early_stop_patience = 1000;
    ScheduleState s = schedule_step(initial_schedule(cfg), 1.0, cfg);
    for (int i = 0; i < 60; ++i) s = schedule_step(s, 0.0, cfg);
    EXPECT_EQ(s.decays, 20);
    EXPECT_EQ(s.current_lr, std::ldexp(1e-4, -20));
}

TEST(TrainConfig, DefaultsAndValidation) {
    EXPECT_EQ(default_batch_size("unet"), 4);
    EXPECT_EQ(default_batch_size("r2unet"), 2);
    EXPECT_EQ(default_batch_size("unetpp"), 4);
    EXPECT_THROW((void)default_batch_size("resnet"), UsageError);
    TrainConfig c;
    c.lr_factor = 1.0;
    EXPECT_THROW(c.validate(), UsageError);
    c = TrainConfig{};
    c.mode = TrainMode::separate;
    EXPECT_NO_THROW(c.validate());
    EXPECT_THROW((void)c.hello_mode(), UsageError);
    c.target = ClassId::sm;
    EXPECT_EQ(c.hello_mode().class_count(), 2u);
    EXPECT_THROW((void)nlohmann::json::parse(R"({"learning_rate": 1})").get<TrainConfig>(), UsageError);
    const auto j = nlohmann::json::parse(R"({"mode": "separate", "class": "SAT", "batch_size": 3})");
    const TrainConfig parsed = j.get<TrainConfig>();
    EXPECT_EQ(parsed.target, ClassId::sat);
    EXPECT_EQ(parsed.effective_batch_size(), 3);
}

/// Threshold backend that records what the orchestrator sends.
class SpyServer : public BackendServer {
public:
    std::optional<Message> handle(const Message& request) override {
        if (const auto* b = std::get_if<TrainBatch>(&request)) {
            batch_sizes.push_back(b->images.dims[0]);
            channels = b->onehot.dims[1];
            if (fail_after && batch_sizes.size() > *fail_after) throw std::runtime_error("backend crashed");
        }
        if (const auto* lr = std::get_if<SetLearningRate>(&request)) lrs.push_back(lr->lr);
        if (std::holds_alternative<SaveCheckpoint>(request)) ++checkpoints;
        return inner.handle(request);
    }

    ThresholdBackend inner;
    std::vector<std::uint32_t> batch_sizes;
    std::uint32_t channels = 0;
    std::vector<double> lrs;
    int checkpoints = 0;
    std::optional<std::size_t> fail_after;
};

struct TrainingFixture : ::testing::Test {
    void SetUp() override {
        for (std::uint64_t s = 1; s <= 3; ++s) {
            Phantom p = generate_phantom(testing::small_phantom_spec(s, 5.0));
            Case c{"case" + std::to_string(s), ScanType::whole_body, std::move(p.image), std::move(p.mask)};
            (s < 3 ? train : validation).push_back(std::move(c));
        }
        inputs.train = train;
        inputs.validation = validation;
        inputs.sampler.cell_mm = 20.0;
        inputs.sampler.patch_mm = 24.0;
        inputs.sampler.pairs_per_class_per_case = 1;
        cfg.augment = false;
    }

    std::pair<TrainingResult, SpyServer*> run(const TrainConfig& c) {
        auto spy = std::make_unique<SpyServer>();
        SpyServer* raw = spy.get();
        handle = testing::loopback(std::move(spy), make_hello(c.hello_mode(), 24));
        return {run_training(inputs, c, *handle), raw};
    }

    std::vector<Case> train;
    std::vector<Case> validation;
    TrainingInputs inputs;
    TrainConfig cfg;
    std::unique_ptr<BackendHandle> handle;
};

TEST_F(TrainingFixture, ConstantMetricStopsAfterElevenEpochs) {
    testing::TempDir dir("train");
    inputs.checkpoint_dir = dir.path();
    const auto [result, spy] = run(cfg);
    ASSERT_EQ(result.log.size(), 11u);
    for (const auto& e : result.log) EXPECT_DOUBLE_EQ(e.val_metric, result.log[0].val_metric);
    EXPECT_TRUE(result.schedule.stop_flag);
    EXPECT_EQ(result.best_epoch, 0);
    EXPECT_EQ(spy->checkpoints, 1);
    ASSERT_TRUE(result.checkpoint.has_value());
    EXPECT_TRUE(std::filesystem::exists(*result.checkpoint));
    // lr at start, then after each of the three decays.
    EXPECT_EQ(spy->lrs, (std::vector<double>{1e-4, 5e-5, 2.5e-5, 1.25e-5}));
    EXPECT_EQ(result.log[3].lr, 1e-4);
    EXPECT_EQ(result.log[4].lr, 5e-5);
    for (std::size_t i = 0; i < result.log.size(); ++i) EXPECT_EQ(result.log[i].epoch, static_cast<int>(i));
}

TEST_F(TrainingFixture, JointBatchesHaveSixChannels) {
    cfg.max_epochs = 1;
    const auto [result, spy] = run(cfg);
    EXPECT_EQ(spy->channels, 6u);
    // 2 cases x 5 classes x 2 records = 20 records in batches of 4.
    EXPECT_EQ(spy->batch_sizes, (std::vector<std::uint32_t>(5, 4)));
    for (int c = 1; c < kClassCount; ++c) EXPECT_FALSE(std::isnan(result.log[0].val_dice[c]));
    EXPECT_GT(result.log[0].val_metric, 0.8);
}

TEST_F(TrainingFixture, SeparateModeHasTwoChannels) {
    cfg.max_epochs = 1;
    cfg.mode = TrainMode::separate;
    cfg.target = ClassId::bone;
    cfg.model_name = "r2unet";
    const auto [result, spy] = run(cfg);
    EXPECT_EQ(spy->channels, 2u);
    EXPECT_EQ(spy->batch_sizes, (std::vector<std::uint32_t>(10, 2)));
    EXPECT_TRUE(std::isnan(result.log[0].val_dice[code(ClassId::sat)]));
    EXPECT_DOUBLE_EQ(result.log[0].val_metric, result.log[0].val_dice[code(ClassId::bone)]);
}

TEST_F(TrainingFixture, DeterministicForSeed) {
    cfg.max_epochs = 2;
    cfg.augment = true;
    const auto a = run(cfg).first;
    const auto b = run(cfg).first;
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
        EXPECT_EQ(a.log[i].val_metric, b.log[i].val_metric);
    }
}

TEST_F(TrainingFixture, BackendCrashCarriesCheckpoint) {
    testing::TempDir dir("crash");
    inputs.checkpoint_dir = dir.path();
    auto spy = std::make_unique<SpyServer>();
    spy->fail_after = 7;
    handle = testing::loopback(std::move(spy), make_hello({}, 24));
    try {
        (void)run_training(inputs, cfg, *handle);
        FAIL() << "expected TrainingFailure";
    } catch (const TrainingFailure& e) {
        ASSERT_TRUE(e.checkpoint().has_value());
        EXPECT_EQ(std::filesystem::path(*e.checkpoint()).filename(), "best.ckpt");
    }
}

TEST_F(TrainingFixture, SeparateModeRejectsAbsentClass) {
    for (auto& c : train) {
        for (auto& v : c.mask.data()) if (v == code(ClassId::imat)) v = 0;
    }
    cfg.mode = TrainMode::separate;
    cfg.target = ClassId::imat;
    EXPECT_THROW((void)run(cfg), DataError);
}

TEST(EpochLogCsv, HeaderAndRows) {
    EpochLog e;
    e.epoch = 2;
    e.val_dice.fill(0.5);
    std::ostringstream out;
    write_epoch_log_csv(out, std::span<const EpochLog>(&e, 1));
    const std::string s = out.str();
    EXPECT_EQ(s.substr(0, s.find(',')), "epoch");
    EXPECT_NE(s.find("\n2,"), std::string::npos);
}

TEST(DiceAccumulatorTest, AggregatesOverPatches) {
    DiceAccumulator acc;
    LabelMask a(testing::unit_geometry(4, 1, 1), 0);
    LabelMask b = a;
    a[0] = 1;
    a[1] = 1;
    b[1] = 1;
    acc.add(a, b);
    acc.add(b, b);
    EXPECT_DOUBLE_EQ(acc.dice(ClassId::vat), 2.0 * 2 / (3 + 2));
    EXPECT_DOUBLE_EQ(acc.dice(ClassId::bone), 1.0);
}

}  // namespace
}  // namespace bcseg
