#include <gtest/gtest.h>

#include <fstream>

#include "bcseg/error.hpp"
#include "bcseg/volume_io.hpp"
#include "unit/test_support.hpp"

namespace bcseg {
namespace {

using testing::TempDir;

Volume ramp_volume() {
    Geometry g;
    g.dims = {5, 4, 3};
    g.spacing = {0.75, 0.75, 2.5};
    g.origin = {-12.0, 3.5, 100.0};
    std::vector<float> v(g.voxel_count());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<float>(i) * 7.0F - 200.0F;
    }
    return make_volume(g, std::move(v));
}

TEST(VolumeIo, FormatFromExtension) {
    EXPECT_EQ(format_from_path("a.nii"), VolumeFormat::nifti1);
    EXPECT_EQ(format_from_path("a.nii.gz"), VolumeFormat::nifti1);
    EXPECT_EQ(format_from_path("a.json"), VolumeFormat::rvol);
    EXPECT_EQ(rvol_base("dir/a.json"), std::filesystem::path("dir/a"));
    EXPECT_EQ(rvol_base("dir/a.raw"), std::filesystem::path("dir/a"));
}

TEST(VolumeIo, RvolRoundTrip) {
    TempDir dir("rvol");
    const Volume v = ramp_volume();
    save_volume(v, dir / "img.json");
    EXPECT_EQ(load_volume(dir / "img.json"), v);
    EXPECT_EQ(load_volume(dir / "img.raw"), v);

    LabelMask m(v.geometry(), 0);
    m[3] = 5;
    m[7] = 2;
    save_mask(m, dir / "mask.json");
    EXPECT_EQ(load_mask(dir / "mask.json"), m);
}

TEST(VolumeIo, NiftiRoundTripPlainAndGzip) {
    TempDir dir("nifti");
    const Volume v = ramp_volume();
    for (const char* name : {"img.nii", "img.nii.gz"}) {
        save_volume(v, dir / name);
        const Volume back = load_volume(dir / name);
        EXPECT_EQ(back.geometry().dims, v.geometry().dims);
        for (int k = 0; k < 3; ++k) {
            EXPECT_NEAR(back.geometry().spacing[k], v.geometry().spacing[k], 1e-6);
            EXPECT_NEAR(back.geometry().origin[k], v.geometry().origin[k], 1e-4);
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            ASSERT_FLOAT_EQ(back[i], v[i]);
        }
    }
    LabelMask m(v.geometry(), 4);
    save_mask(m, dir / "m.nii.gz");
    EXPECT_EQ(load_mask(dir / "m.nii.gz").data()[0], 4);
}

TEST(VolumeIo, MissingAndTruncatedFilesAreDataErrors) {
    TempDir dir("bad");
    EXPECT_THROW((void)load_volume(dir / "nope.json"), DataError);
    save_volume(ramp_volume(), dir / "img.json");
    std::filesystem::resize_file(dir / "img.raw", 10);
    EXPECT_THROW((void)load_volume(dir / "img.json"), DataError);
    {
        std::ofstream out(dir / "junk.nii", std::ios::binary);
        out << "not a nifti header";
    }
    EXPECT_THROW((void)load_volume(dir / "junk.nii"), DataError);
}

TEST(VolumeIo, InvalidMaskLabelsRejected) {
    TempDir dir("badmask");
    LabelMask m(testing::unit_geometry(2, 2, 2), 0);
    m[0] = 9;
    save_mask(m, dir / "m.json");
    EXPECT_THROW((void)load_mask(dir / "m.json"), DataError);
}

}  // namespace
}  // namespace bcseg
