#pragma once

#include <cstdint>
#include <utility>

#include <nlohmann/json_fwd.hpp>

#include "bcseg/volume.hpp"

namespace bcseg {

/// Synthetic torso description. Layers are concentric ellipsoids shrunk by the
/// shell thicknesses: skin-side SAT shell, muscle wall, then a visceral cavity
/// holding VAT blobs and a bone ellipsoid at the center.
struct PhantomSpec {
    std::uint64_t seed = 1;
    Vec3 body_half_axes_mm{70.0, 50.0, 60.0};
    double sat_thickness_mm = 12.0;
    double muscle_thickness_mm = 12.0;
    Vec3 bone_half_axes_mm{12.0, 12.0, 30.0};
    double vat_fraction = 0.3;
    int imat_speck_count = 12;
    double noise_sd_hu = 10.0;
    /// Native sampling grid of the generated scan.
    Vec3 spacing_mm{1.0, 1.0, 1.0};
    /// Air margin around the body on every side.
    double margin_mm = 6.0;

    /// Throws DataError when the layers do not nest or extents are not positive.
    void validate() const;
};

/// Nominal densities. Each sits strictly inside its default HU window.
namespace phantom_hu {
inline constexpr float air = -1000.0F;
inline constexpr float sat = -105.0F;
inline constexpr float muscle = 45.0F;
inline constexpr float vat = -90.0F;
inline constexpr float imat = -95.0F;
inline constexpr float bone = 700.0F;
/// Unlabelled visceral filler: inside the body, outside every tissue window.
inline constexpr float cavity = -350.0F;
}  // namespace phantom_hu

struct Phantom {
    Volume image;
    LabelMask mask;
};

/// Deterministic for a given spec. The mask is exact; noise only touches the image.
[[nodiscard]] Phantom generate_phantom(const PhantomSpec& spec);

void to_json(nlohmann::json& j, const PhantomSpec& spec);
void from_json(const nlohmann::json& j, PhantomSpec& spec);

}  // namespace bcseg
