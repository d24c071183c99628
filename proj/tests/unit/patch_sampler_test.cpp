#include <gtest/gtest.h>

#include <algorithm>

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"
#include "bcseg/patch_sampler.hpp"
#include "bcseg/phantom.hpp"
#include "unit/test_support.hpp"

namespace bcseg {
namespace {

using testing::unit_geometry;

Case phantom_case(const std::string& id, std::uint64_t seed, int imat = 6) {
    PhantomSpec spec = testing::small_phantom_spec(seed, 5.0);
    spec.imat_speck_count = imat;
    Phantom p = generate_phantom(spec);
    return Case{id, ScanType::whole_body, std::move(p.image), std::move(p.mask)};
}

std::size_t cell_of(const GridSummary& g, const Index3& v) {
    const Index3 c{v[0] / g.cell_side, v[1] / g.cell_side, v[2] / g.cell_side};
    return static_cast<std::size_t>((c[2] * g.cell_dims[1] + c[1]) * g.cell_dims[0] + c[0]);
}

TEST(PartitionGrid, CellCounts) {
    const SamplerConfig cfg;
    EXPECT_EQ(partition_grid(LabelMask(unit_geometry(60, 60, 60), 0), cfg).cells.size(), 1u);
    EXPECT_EQ(partition_grid(LabelMask(unit_geometry(61, 61, 61), 0), cfg).cells.size(), 8u);
    const GridSummary g = partition_grid(LabelMask(unit_geometry(130, 70, 20), 0), cfg);
    EXPECT_EQ(g.cell_dims, (Index3{3, 2, 1}));
}

TEST(PartitionGrid, PaddingCountsAsBackground) {
    LabelMask m(unit_geometry(61, 60, 60), 2);
    const GridSummary g = partition_grid(m, SamplerConfig{});
    ASSERT_EQ(g.cells.size(), 2u);
    EXPECT_EQ(g.cells[1].counts[2], 60 * 60);
    EXPECT_DOUBLE_EQ(g.fraction(1, ClassId::sat), 1.0 / 60.0);
    EXPECT_EQ(g.totals[2], 61 * 60 * 60);
}

TEST(PartitionGrid, RejectsNonIsotropic) {
    Geometry geo = unit_geometry(10, 10, 10);
    geo.spacing[2] = 2.0;
    EXPECT_THROW((void)partition_grid(LabelMask(geo, 0), SamplerConfig{}), DataError);
}

TEST(SamplePair, SingleVoxelClassIsCentered) {
    const Geometry g = unit_geometry(100, 100, 100);
    Volume img(g, -1000.0F);
    LabelMask m(g, 0);
    m.at(70, 20, 55) = code(ClassId::sm);
    img.at(70, 20, 55) = 45.0F;
    const SamplerConfig cfg;
    const GridSummary grid = partition_grid(m, cfg);
    Rng rng(1);
    const auto pair = sample_pair(grid, img, m, ClassId::sm, rng, cfg);
    ASSERT_TRUE(pair.has_value());
    EXPECT_EQ(pair->foreground.center, (Index3{70, 20, 55}));
    EXPECT_EQ(pair->foreground.mask.at(40, 40, 40), code(ClassId::sm));
    EXPECT_EQ(pair->foreground.image.at(40, 40, 40), 45.0F);
    EXPECT_EQ(pair->foreground.image.geometry().origin, (Vec3{30.0, -20.0, 15.0}));
    EXPECT_FALSE(pair->background.relaxed_background);
    EXPECT_FALSE(sample_pair(grid, img, m, ClassId::vat, rng, cfg).has_value());
}

TEST(SamplePair, SmallVolumeIsPadded) {
    const Geometry g = unit_geometry(50, 40, 30);
    Volume img(g, 0.0F);
    LabelMask m(g, code(ClassId::sm));
    const SamplerConfig cfg;
    const GridSummary grid = partition_grid(m, cfg);
    Rng rng(2);
    const auto pair = sample_pair(grid, img, m, ClassId::sm, rng, cfg);
    ASSERT_TRUE(pair.has_value());
    EXPECT_EQ(pair->foreground.image.dims(), (Index3{80, 80, 80}));
    EXPECT_EQ(pair->foreground.image.at(0, 0, 0), kPadHu);
    EXPECT_EQ(pair->foreground.mask.at(0, 0, 0), 0);
    // Every cell is full of SM, so the background cell is relaxed.
    EXPECT_TRUE(pair->background.relaxed_background);
}

TEST(SamplePair, ThousandPairsComply) {
    const Case c = phantom_case("c", 3);
    const SamplerConfig cfg{.cell_mm = 20.0, .patch_mm = 24.0};
    const GridSummary grid = partition_grid(c.mask, cfg);
    Rng rng(4);
    const std::int64_t h = cfg.patch_side() / 2;
    for (int i = 0; i < 1000; ++i) {
        const ClassId cls = kTissues[static_cast<std::size_t>(i) % kTissues.size()];
        const auto pair = sample_pair(grid, c.image, c.mask, cls, rng, cfg);
        ASSERT_TRUE(pair.has_value());
        ASSERT_EQ(pair->foreground.mask.at(h, h, h), code(cls));
        ASSERT_EQ(c.mask.at(pair->foreground.center), code(cls));
        const auto& bg = pair->background;
        ASSERT_TRUE(c.mask.geometry().contains(bg.center));
        if (!bg.relaxed_background) {
            ASSERT_LE(grid.fraction(cell_of(grid, bg.center), cls), cfg.background_fg_fraction_max);
        }
    }
}

TEST(SampleRound, SkipsAbsentClass) {
    const Case c = phantom_case("noimat", 5, 0);
    const SamplerConfig cfg{.cell_mm = 20.0, .patch_mm = 24.0};
    const GridSummary grid = partition_grid(c.mask, cfg);
    Rng rng(1);
    const RoundResult r = sample_round(c, grid, cfg, rng);
    EXPECT_EQ(r.records.size(), 8u);
    ASSERT_EQ(r.skipped.size(), 1u);
    EXPECT_EQ(r.skipped[0], ClassId::imat);
    EXPECT_EQ(r.records[0].kind, PatchKind::foreground);
    EXPECT_EQ(r.records[1].kind, PatchKind::background);
}

struct StreamFixture : ::testing::Test {
    void SetUp() override {
        cases.push_back(phantom_case("a", 1));
        cases.push_back(phantom_case("b", 2));
        cfg.cell_mm = 20.0;
        cfg.patch_mm = 24.0;
        grids = summarize_cases(cases, cfg);
    }

    std::vector<PatchRecord> drain(std::uint64_t epoch, StreamOptions opts) {
        EpochStream s(cases, grids, cfg, epoch, opts);
        std::vector<PatchRecord> out;
        while (auto r = s.next()) out.push_back(std::move(*r));
        return out;
    }

    std::vector<Case> cases;
    std::vector<GridSummary> grids;
    SamplerConfig cfg;
};

TEST_F(StreamFixture, EightyRecordsPerCasePerEpoch) {
    const auto recs = drain(0, {});
    EXPECT_EQ(recs.size(), 2u * 8u * 5u * 2u);
    for (const auto& id : {"a", "b"}) {
        EXPECT_EQ(std::count_if(recs.begin(), recs.end(), [&](const PatchRecord& r) { return r.case_id == id; }),
                  80);
    }
}

TEST_F(StreamFixture, WorkerCountDoesNotChangeStream) {
    StreamOptions one;
    one.augment = AugmentSpec{};
    StreamOptions four = one;
    four.workers = 4;
    const auto a = drain(3, one);
    const auto b = drain(3, four);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].case_id, b[i].case_id);
        ASSERT_EQ(a[i].center, b[i].center);
        ASSERT_EQ(a[i].augmentation, b[i].augmentation);
        ASSERT_EQ(a[i].image, b[i].image);
        ASSERT_EQ(a[i].mask, b[i].mask);
    }
}

TEST_F(StreamFixture, EpochsDiffer) {
    const auto a = drain(0, {});
    const auto b = drain(1, {});
    ASSERT_EQ(a.size(), b.size());
    bool differ = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        differ = differ || a[i].case_id != b[i].case_id || a[i].center != b[i].center;
    }
    EXPECT_TRUE(differ);
    const auto again = drain(0, {});
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].center, again[i].center);
        ASSERT_EQ(a[i].task_seed, again[i].task_seed);
    }
}

TEST_F(StreamFixture, WarningsReportAbsentClass) {
    cases.push_back(phantom_case("c", 3, 0));
    grids = summarize_cases(cases, cfg);
    EpochStream s(cases, grids, cfg, 0);
    std::size_t n = 0;
    while (s.next()) ++n;
    EXPECT_EQ(n, 80u + 80u + 64u);
    const auto w = s.warnings();
    ASSERT_EQ(w.size(), 1u);
    EXPECT_NE(w[0].find("IMAT"), std::string::npos);
}

TEST(TaskSeed, DependsOnEveryPart) {
    const SamplerConfig cfg;
    const auto s = task_seed(cfg, "a", 0, 0);
    EXPECT_NE(s, task_seed(cfg, "b", 0, 0));
    EXPECT_NE(s, task_seed(cfg, "a", 1, 0));
    EXPECT_NE(s, task_seed(cfg, "a", 0, 1));
}

TEST(SamplerConfig, JsonRejectsUnknownKeys) {
    EXPECT_THROW((void)nlohmann::json::parse(R"({"cells": 3})").get<SamplerConfig>(), UsageError);
    const auto c = nlohmann::json::parse(R"({"patch_mm": 64})").get<SamplerConfig>();
    EXPECT_EQ(c.patch_side(), 64);
}

}  // namespace
}  // namespace bcseg
