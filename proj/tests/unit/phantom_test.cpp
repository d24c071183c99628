#include <gtest/gtest.h>

#include <array>

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"
#include "bcseg/phantom.hpp"
#include "unit/test_support.hpp"

namespace bcseg {
namespace {

std::array<std::size_t, kClassCount> histogram(const LabelMask& m) {
    std::array<std::size_t, kClassCount> h{};
    for (auto v : m.data()) ++h[v];
    return h;
}

TEST(Phantom, DeterministicForSeed) {
    const PhantomSpec spec = testing::small_phantom_spec(4, 10.0);
    const Phantom a = generate_phantom(spec);
    const Phantom b = generate_phantom(spec);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.mask, b.mask);
    PhantomSpec other = spec;
    other.seed = 5;
    EXPECT_NE(generate_phantom(other).image, a.image);
}

TEST(Phantom, ContainsEveryClass) {
    const Phantom p = generate_phantom(testing::small_phantom_spec(2));
    const auto h = histogram(p.mask);
    for (int c = 0; c < kClassCount; ++c) {
        EXPECT_GT(h[c], 0u) << "class " << c;
    }
    EXPECT_EQ(p.image.geometry(), p.mask.geometry());
}

TEST(Phantom, NoiseFreeDensitiesMatchLabels) {
    const Phantom p = generate_phantom(testing::small_phantom_spec(3, 0.0));
    for (std::size_t i = 0; i < p.image.size(); ++i) {
        const float hu = p.image[i];
        switch (static_cast<ClassId>(p.mask[i])) {
            case ClassId::sat: ASSERT_EQ(hu, phantom_hu::sat); break;
            case ClassId::vat: ASSERT_EQ(hu, phantom_hu::vat); break;
            case ClassId::imat: ASSERT_EQ(hu, phantom_hu::imat); break;
            case ClassId::sm: ASSERT_EQ(hu, phantom_hu::muscle); break;
            case ClassId::bone: ASSERT_EQ(hu, phantom_hu::bone); break;
            case ClassId::background:
                ASSERT_TRUE(hu == phantom_hu::air || hu == phantom_hu::cavity);
                break;
        }
    }
}

TEST(Phantom, ZeroImatSpecksGivesNoImat) {
    PhantomSpec spec = testing::small_phantom_spec(1);
    spec.imat_speck_count = 0;
    EXPECT_EQ(histogram(generate_phantom(spec).mask)[code(ClassId::imat)], 0u);
}

TEST(Phantom, AnisotropicSpacingShrinksGrid) {
    PhantomSpec spec = testing::small_phantom_spec(1);
    const Phantom iso = generate_phantom(spec);
    spec.spacing_mm = {1.0, 1.0, 3.0};
    const Phantom thick = generate_phantom(spec);
    EXPECT_EQ(thick.image.geometry().dims[0], iso.image.geometry().dims[0]);
    EXPECT_LT(thick.image.geometry().dims[2], iso.image.geometry().dims[2] / 2);
}

TEST(Phantom, ValidateRejectsNonNestingLayers) {
    PhantomSpec spec;
    spec.sat_thickness_mm = 40.0;
    spec.muscle_thickness_mm = 40.0;
    EXPECT_THROW(spec.validate(), DataError);
    spec = PhantomSpec{};
    spec.body_half_axes_mm = {-1.0, 10.0, 10.0};
    EXPECT_THROW(spec.validate(), DataError);
}

TEST(Phantom, SpecJsonRoundTrip) {
    const PhantomSpec spec = testing::small_phantom_spec(9, 4.0);
    const nlohmann::json j = spec;
    const PhantomSpec back = j.get<PhantomSpec>();
    EXPECT_EQ(nlohmann::json(back), j);
}

}  // namespace
}  // namespace bcseg
