#include <gtest/gtest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "bcseg/augment.hpp"
#include "bcseg/error.hpp"
#include "bcseg/rng.hpp"
#include "unit/test_support.hpp"

namespace bcseg {
namespace {

using testing::unit_geometry;

PatchPairImages random_patch(std::int64_t side, std::uint64_t seed) {
    Rng rng(seed);
    PatchPairImages p{Volume(unit_geometry(side, side, side)), LabelMask(unit_geometry(side, side, side))};
    for (std::size_t i = 0; i < p.image.size(); ++i) {
        p.image[i] = static_cast<float>(rng.uniform(-500.0, 1500.0));
        p.mask[i] = static_cast<std::uint8_t>(rng.below(kClassCount));
    }
    return p;
}

TEST(Augment, RightAngleZRotationPermutesVoxels) {
    const PatchPairImages in = random_patch(80, 1);
    AugmentSample s;
    s.rotation_deg = Vec3{0.0, 0.0, 90.0};
    const PatchPairImages out = apply(s, in.image, in.mask);
    for (std::int64_t z = 0; z < 80; z += 7)
        for (std::int64_t y = 0; y < 80; ++y)
            for (std::int64_t x = 0; x < 80; ++x) {
                ASSERT_EQ(out.image.at(x, y, z), in.image.at(y, 79 - x, z));
                ASSERT_EQ(out.mask.at(x, y, z), in.mask.at(y, 79 - x, z));
            }
}

TEST(Augment, IdentitySampleLeavesPatchUnchanged) {
    const PatchPairImages in = random_patch(16, 2);
    AugmentSample s;
    EXPECT_TRUE(s.is_identity());
    const PatchPairImages out = apply(s, in.image, in.mask);
    EXPECT_EQ(out.image, in.image);
    EXPECT_EQ(out.mask, in.mask);
}

TEST(Augment, WholeVoxelTranslationShifts) {
    const PatchPairImages in = random_patch(12, 3);
    AugmentSample s;
    s.translation_mm = Vec3{2.0, 0.0, -1.0};
    const PatchPairImages out = apply(s, in.image, in.mask);
    EXPECT_EQ(out.image.at(5, 5, 5), in.image.at(3, 5, 6));
    EXPECT_EQ(out.mask.at(5, 5, 5), in.mask.at(3, 5, 6));
    EXPECT_EQ(out.image.at(0, 5, 5), kPadHu);
    EXPECT_EQ(out.mask.at(0, 5, 5), 0);
}

TEST(Augment, IntensityStepsLeaveMaskAlone) {
    const PatchPairImages in = random_patch(10, 4);
    AugmentSample s;
    s.density_shift_hu = 25.0;
    s.noise = AugmentSample::Noise{5.0, 99};
    s.smoothing_sd_mm = 0.7;
    const PatchPairImages out = apply(s, in.image, in.mask);
    EXPECT_EQ(out.mask, in.mask);
    EXPECT_NE(out.image, in.image);
}

TEST(Augment, DensityShiftAddsConstant) {
    const PatchPairImages in = random_patch(6, 5);
    AugmentSample s;
    s.density_shift_hu = -40.0;
    const PatchPairImages out = apply(s, in.image, in.mask);
    for (std::size_t i = 0; i < in.image.size(); ++i) {
        ASSERT_FLOAT_EQ(out.image[i], in.image[i] - 40.0F);
    }
}

TEST(Augment, CropBlanksFaces) {
    const PatchPairImages in = random_patch(10, 6);
    AugmentSample s;
    s.crop = std::array<int, 6>{2, 0, 0, 1, 0, 0};
    const PatchPairImages out = apply(s, in.image, in.mask);
    EXPECT_EQ(out.image.at(1, 4, 4), kPadHu);
    EXPECT_EQ(out.mask.at(1, 4, 4), 0);
    EXPECT_EQ(out.image.at(2, 4, 4), in.image.at(2, 4, 4));
    EXPECT_EQ(out.mask.at(4, 9, 4), 0);
}

TEST(Augment, ProbabilityZeroAndOne) {
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        EXPECT_TRUE(draw(AugmentSpec::with_probability(0.0), rng).is_identity());
        EXPECT_EQ(draw(AugmentSpec::with_probability(1.0), rng).transform_count(), 7);
    }
}

TEST(Augment, DrawsRespectRanges) {
    const AugmentSpec spec = AugmentSpec::with_probability(1.0);
    Rng rng(8);
    for (int i = 0; i < 500; ++i) {
        const AugmentSample s = draw(spec, rng);
        ASSERT_GE(*s.scale, 0.9);
        ASSERT_LE(*s.scale, 1.1);
        for (int a = 0; a < 3; ++a) {
            ASSERT_LE(std::abs((*s.rotation_deg)[a]), 10.0);
            ASSERT_LE(std::abs((*s.translation_mm)[a]), 10.0);
        }
        for (int f : *s.crop) {
            ASSERT_GE(f, 0);
            ASSERT_LE(f, 8);
        }
        ASSERT_LE(std::abs(*s.density_shift_hu), 50.0);
        ASSERT_LE(s.noise->sd_hu, 20.0);
        ASSERT_LE(*s.smoothing_sd_mm, 1.0);
    }
}

TEST(Augment, SelectionFrequencyTracksProbability) {
    const AugmentSpec spec = AugmentSpec::with_probability(0.3);
    Rng rng(9);
    int scaled = 0;
    const int n = 5000;
    for (int i = 0; i < n; ++i) scaled += draw(spec, rng).scale ? 1 : 0;
    EXPECT_NEAR(static_cast<double>(scaled) / n, 0.3, 0.03);
}

TEST(Augment, ValidateAndJson) {
    AugmentSpec bad;
    bad.scale.probability = 1.5;
    EXPECT_THROW(bad.validate(), UsageError);
    bad = AugmentSpec{};
    bad.noise.min_sd = 30.0;
    EXPECT_THROW(bad.validate(), UsageError);

    AugmentSpec s;
    s.rotation.max_deg = 15.0;
    const nlohmann::json j = s;
    EXPECT_EQ(j.get<AugmentSpec>().rotation.max_deg, 15.0);
    EXPECT_THROW((void)nlohmann::json::parse(R"({"shear": {}})").get<AugmentSpec>(), UsageError);
}

}  // namespace
}  // namespace bcseg
