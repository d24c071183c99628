#include <gtest/gtest.h>

#include <cmath>

#include "bcseg/error.hpp"
#include "bcseg/inference.hpp"
#include "bcseg/metrics.hpp"
#include "bcseg/phantom.hpp"
#include "bcseg/session.hpp"
#include "bcseg/threshold_backend.hpp"
#include "unit/test_support.hpp"

namespace bcseg {
namespace {

using namespace protocol;
using testing::unit_geometry;

/// Two channels whose values depend only on each voxel's own intensity.
class IntensityServer : public BackendServer {
public:
    std::optional<Message> handle(const Message& request) override {
        if (const auto* h = std::get_if<Hello>(&request)) {
            Hello r = *h;
            r.class_count = 2;
            r.metadata = "{}";
            return r;
        }
        if (const auto* r = std::get_if<InferRequest>(&request)) {
            ++windows;
            const std::size_t n = r->image.data.size();
            TensorF32 p{{2, r->image.dims[1], r->image.dims[2], r->image.dims[3]}, std::vector<float>(2 * n)};
            for (std::size_t i = 0; i < n; ++i) {
                p.data[i] = (r->image.data[i] + 1.0F) / 2.0F;
                p.data[n + i] = 1.0F - p.data[i];
            }
            return InferResponse{std::move(p)};
        }
        if (std::holds_alternative<Shutdown>(request)) return std::nullopt;
        return Metrics{};
    }
    int windows = 0;
};

/// Fixed probability vector for every voxel.
class ConstantServer : public BackendServer {
public:
    explicit ConstantServer(std::vector<float> p) : p_(std::move(p)) {}
    std::optional<Message> handle(const Message& request) override {
        if (const auto* h = std::get_if<Hello>(&request)) {
            Hello r = *h;
            r.metadata = "{}";
            return r;
        }
        if (const auto* r = std::get_if<InferRequest>(&request)) {
            const std::size_t n = r->image.data.size();
            TensorF32 t{{static_cast<std::uint32_t>(p_.size()), r->image.dims[1], r->image.dims[2], r->image.dims[3]},
                        {}};
            for (float v : p_) t.data.insert(t.data.end(), n, v);
            return InferResponse{std::move(t)};
        }
        if (std::holds_alternative<Shutdown>(request)) return std::nullopt;
        return Metrics{};
    }

private:
    std::vector<float> p_;
};

Hello hello2(std::uint32_t side) {
    return make_hello(HelloMode{ClassId::sm}, side);
}

TEST(TilePlan, WindowCounts) {
    EXPECT_EQ(plan_tiles(unit_geometry(80, 80, 80)).origins.size(), 1u);
    EXPECT_EQ(plan_tiles(unit_geometry(120, 120, 120)).origins.size(), 8u);
    const TilePlan small = plan_tiles(unit_geometry(50, 50, 50));
    EXPECT_EQ(small.origins.size(), 1u);
    EXPECT_EQ(small.padded_dims, (Index3{80, 80, 80}));
    EXPECT_EQ(axis_origins(150, 80, 40), (std::vector<std::int64_t>{0, 40, 70}));
    EXPECT_EQ(axis_origins(160, 80, 40), (std::vector<std::int64_t>{0, 40, 80}));
    EXPECT_EQ(axis_origins(81, 80, 40), (std::vector<std::int64_t>{0, 1}));
    EXPECT_THROW((void)plan_tiles(unit_geometry(10, 10, 10), 80, 90), UsageError);
}

TEST(TilePlan, EveryVoxelCovered) {
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
        const std::int64_t p = 4 + static_cast<std::int64_t>(rng.below(20));
        const std::int64_t s = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(p)));
        const std::int64_t dim = 1 + static_cast<std::int64_t>(rng.below(100));
        const auto o = axis_origins(dim, p, s);
        ASSERT_FALSE(o.empty());
        std::vector<int> cover(static_cast<std::size_t>(std::max(dim, p)), 0);
        for (std::size_t i = 0; i < o.size(); ++i) {
            if (i > 0) ASSERT_GT(o[i], o[i - 1]);
            ASSERT_LE(o[i] + p, std::max(dim, p));
            for (std::int64_t k = o[i]; k < o[i] + p; ++k) ++cover[static_cast<std::size_t>(k)];
        }
        for (int c : cover) ASSERT_GE(c, 1) << "dim " << dim << " p " << p << " s " << s;
    }
}

TEST(PredictVolume, SingleWindowIsVerbatim) {
    Rng rng(1);
    Volume v(unit_geometry(16, 16, 16));
    for (auto& x : v.data()) x = static_cast<float>(rng.uniform(-1024.0, 1024.0));
    auto h = testing::loopback(std::make_unique<IntensityServer>(), hello2(16));
    const ProbVolume p = predict_volume(v, *h, plan_tiles(v.geometry(), 16, 8));
    for (std::size_t i = 0; i < v.size(); ++i) {
        ASSERT_EQ(p.coverage[i], 1u);
        ASSERT_EQ(p.at(0, i), (normalize_hu(v[i]) + 1.0F) / 2.0F);
    }
}

TEST(PredictVolume, OverlapAveragingIsIdempotent) {
    Rng rng(2);
    Volume v(unit_geometry(37, 23, 30));
    for (auto& x : v.data()) x = static_cast<float>(rng.uniform(-1024.0, 1024.0));
    auto h = testing::loopback(std::make_unique<IntensityServer>(), hello2(16));
    const ProbVolume p = predict_volume(v, *h, plan_tiles(v.geometry(), 16, 5));
    for (std::size_t i = 0; i < v.size(); ++i) {
        ASSERT_GE(p.coverage[i], 1u);
        ASSERT_NEAR(p.at(0, i), (normalize_hu(v[i]) + 1.0F) / 2.0F, 1e-6);
        ASSERT_NEAR(p.at(0, i) + p.at(1, i), 1.0F, 1e-6);
    }
}

TEST(PredictVolume, ConstantBackendGivesConstantField) {
    Volume v(unit_geometry(30, 20, 25), 0.0F);
    const std::vector<float> probs = {0.1F, 0.2F, 0.3F, 0.05F, 0.25F, 0.1F};
    auto h = testing::loopback(std::make_unique<ConstantServer>(probs), make_hello({}, 12));
    std::vector<BackendHandle*> many = {h.get()};
    const ProbVolume p = predict_volume(v, many, plan_tiles(v.geometry(), 12, 7));
    for (std::size_t i = 0; i < v.size(); ++i) {
        for (std::uint32_t c = 0; c < 6; ++c) ASSERT_NEAR(p.at(c, i), probs[c], 1e-6);
    }
    const LabelMask l = argmax_labels(p);
    for (auto x : l.data()) ASSERT_EQ(x, 2);
}

TEST(PredictVolume, SeveralBackendsMatchOne) {
    Rng rng(3);
    Volume v(unit_geometry(40, 30, 35));
    for (auto& x : v.data()) x = static_cast<float>(rng.uniform(-200.0, 900.0));
    auto a = testing::threshold_session(16);
    auto b = testing::threshold_session(16);
    const TilePlan plan = plan_tiles(v.geometry(), 16, 8);
    const ProbVolume one = predict_volume(v, *a, plan);
    std::vector<BackendHandle*> two = {a.get(), b.get()};
    const ProbVolume both = predict_volume(v, two, plan);
    EXPECT_EQ(one.coverage, both.coverage);
    for (std::size_t i = 0; i < one.probs.size(); ++i) ASSERT_NEAR(one.probs[i], both.probs[i], 1e-6);
}

TEST(Argmax, TiesGoToLowestChannel) {
    ProbVolume p;
    p.geometry = unit_geometry(3, 1, 1);
    p.channels = 3;
    p.coverage = {1, 1, 1};
    p.probs = {0.5F, 0.2F, 0.4F,   // channel 0
               0.5F, 0.4F, 0.2F,   // channel 1
               0.0F, 0.4F, 0.4F};  // channel 2
    const LabelMask l = argmax_labels(p);
    EXPECT_EQ(l[0], 0);
    EXPECT_EQ(l[1], 1);
    EXPECT_EQ(l[2], 0);
    const LabelMask mapped = channel_labels_to_classes(l, HelloMode{ClassId::sat});
    EXPECT_EQ(mapped[1], code(ClassId::sat));
}

TEST(CombineSeparate, ThresholdAndTies) {
    auto vol = [](std::vector<float> fg) {
        ProbVolume p;
        p.geometry = unit_geometry(static_cast<std::int64_t>(fg.size()), 1, 1);
        p.channels = 2;
        p.coverage.assign(fg.size(), 1);
        for (float f : fg) p.probs.push_back(1.0F - f);
        p.probs.insert(p.probs.end(), fg.begin(), fg.end());
        return p;
    };
    const std::vector<ProbVolume> v = {vol({0.9F, 0.4F, 0.7F, 0.6F}), vol({0.2F, 0.45F, 0.7F, 0.8F})};
    const std::vector<ClassId> cls = {ClassId::sat, ClassId::sm};
    const LabelMask m = combine_separate(v, cls);
    EXPECT_EQ(m[0], code(ClassId::sat));
    EXPECT_EQ(m[1], 0);
    EXPECT_EQ(m[2], code(ClassId::sat));
    EXPECT_EQ(m[3], code(ClassId::sm));
}

TEST(SegmentCase, AllAirIsBackground) {
    Volume v(unit_geometry(50, 40, 30), -1000.0F);
    auto h = testing::threshold_session(32);
    const LabelMask l = segment_case(v, *h, InferenceConfig{32, 16});
    EXPECT_EQ(l.geometry(), v.geometry());
    for (auto x : l.data()) ASSERT_EQ(x, 0);
}

TEST(SegmentCase, ThresholdReproducesNoiseFreePhantom) {
    const Phantom p = generate_phantom(testing::small_phantom_spec(8, 0.0));
    auto h = testing::threshold_session(80);
    const LabelMask l = segment_case(p.image, *h, InferenceConfig{});
    std::size_t same = 0;
    for (std::size_t i = 0; i < l.size(); ++i) same += l[i] == p.mask[i] ? 1 : 0;
    EXPECT_GE(static_cast<double>(same) / static_cast<double>(l.size()), 0.99);
}

TEST(SegmentCase, ThickSlicesMapBackToNativeGrid) {
    PhantomSpec spec = testing::small_phantom_spec(9, 0.0);
    spec.spacing_mm = {1.0, 1.0, 3.0};
    const Phantom p = generate_phantom(spec);
    auto h = testing::threshold_session(80);
    const LabelMask l = segment_case(p.image, *h, InferenceConfig{});
    ASSERT_EQ(l.geometry(), p.mask.geometry());
    for (const ClassId c : {ClassId::sat, ClassId::sm, ClassId::bone}) {
        EXPECT_GE(dice(l, p.mask, c), 0.9) << class_name(c);
    }
}

TEST(SegmentCase, SeparateModelsCombine) {
    const Phantom p = generate_phantom(testing::small_phantom_spec(10, 0.0));
    std::vector<std::unique_ptr<BackendHandle>> owned;
    std::vector<BackendHandle*> handles;
    std::vector<ClassId> classes(kTissues.begin(), kTissues.end());
    for (const ClassId c : classes) {
        owned.push_back(testing::threshold_session(80, c));
        handles.push_back(owned.back().get());
    }
    const LabelMask l = segment_case_separate(p.image, handles, classes, InferenceConfig{});
    EXPECT_GE(dice(l, p.mask, ClassId::sm), 0.95);
    EXPECT_GE(dice(l, p.mask, ClassId::sat), 0.95);
}

}  // namespace
}  // namespace bcseg
