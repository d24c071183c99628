#include "bcseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"
#include "bcseg/morphology.hpp"
#include "bcseg/rng.hpp"

namespace bcseg {

namespace {

constexpr double kSpeckRadiusMin = 2.5;
constexpr double kSpeckRadiusMax = 3.5;
constexpr double kVatRadiusMin = 4.0;
constexpr double kVatRadiusMax = 10.0;

Vec3 shrink(const Vec3& half_axes, double by) {
    return {half_axes[0] - by, half_axes[1] - by, half_axes[2] - by};
}

/// Normalized ellipsoid radius: < 1 inside, 1 on the surface.
double ellipsoid_r2(const Vec3& p, const Vec3& half_axes) {
    const double x = p[0] / half_axes[0];
    const double y = p[1] / half_axes[1];
    const double z = p[2] / half_axes[2];
    return x * x + y * y + z * z;
}

}  // namespace

void PhantomSpec::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (!(body_half_axes_mm[a] > 0.0) || !(bone_half_axes_mm[a] > 0.0) || !(spacing_mm[a] > 0.0)) {
            throw DataError("phantom: extents and spacing must be positive");
        }
    }
    if (sat_thickness_mm < 0.0 || !(muscle_thickness_mm > 0.0) || margin_mm < 0.0 || noise_sd_hu < 0.0) {
        throw DataError("phantom: invalid thickness, margin or noise");
    }
    if (vat_fraction < 0.0 || vat_fraction > 1.0 || imat_speck_count < 0) {
        throw DataError("phantom: vat_fraction must be in [0,1] and imat_speck_count >= 0");
    }
    const Vec3 cavity = shrink(body_half_axes_mm, sat_thickness_mm + muscle_thickness_mm);
    for (int a = 0; a < 3; ++a) {
        // Leave at least 2 mm of cavity around the bone.
        if (cavity[a] <= bone_half_axes_mm[a] + 2.0) {
            throw DataError("phantom: structures do not nest (bone does not fit inside the muscle wall)");
        }
    }
    if (imat_speck_count > 0 && muscle_thickness_mm < 2.0 * kSpeckRadiusMax + 2.0) {
        throw DataError("phantom: muscle wall too thin to enclose IMAT specks");
    }
}

Phantom generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    Geometry g;
    g.spacing = spec.spacing_mm;
    for (int a = 0; a < 3; ++a) {
        const double extent = 2.0 * (spec.body_half_axes_mm[a] + spec.margin_mm);
        g.dims[a] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(extent / g.spacing[a])) + 1);
        // Center the body on physical (0, 0, 0).
        g.origin[a] = -0.5 * static_cast<double>(g.dims[a] - 1) * g.spacing[a];
    }

    const Vec3 body = spec.body_half_axes_mm;
    const Vec3 muscle_outer = shrink(body, spec.sat_thickness_mm);
    const Vec3 cavity = shrink(body, spec.sat_thickness_mm + spec.muscle_thickness_mm);
    const Vec3 bone = spec.bone_half_axes_mm;

    struct Sphere {
        Vec3 c;
        double r;
    };

    // VAT blobs: random spheres centered in the cavity, added until the requested
    // fraction of the free cavity volume is reached.
    std::vector<Sphere> vat;
    const double cavity_volume = 4.0 / 3.0 * std::numbers::pi * cavity[0] * cavity[1] * cavity[2];
    const double bone_volume = 4.0 / 3.0 * std::numbers::pi * bone[0] * bone[1] * bone[2];
    const double vat_target = spec.vat_fraction * (cavity_volume - bone_volume);
    double vat_volume = 0.0;
    for (int attempt = 0; attempt < 10000 && vat_volume < vat_target; ++attempt) {
        const Vec3 c{rng.uniform(-cavity[0], cavity[0]), rng.uniform(-cavity[1], cavity[1]),
                     rng.uniform(-cavity[2], cavity[2])};
        const double r = rng.uniform(kVatRadiusMin, kVatRadiusMax);
        if (ellipsoid_r2(c, cavity) >= 1.0 || ellipsoid_r2(c, bone) < 1.0) {
            continue;
        }
        vat.push_back({c, r});
        vat_volume += 4.0 / 3.0 * std::numbers::pi * r * r * r;
    }

    // IMAT specks: small spheres on the mid-surface of the muscle wall.
    std::vector<Sphere> specks;
    for (int i = 0; i < spec.imat_speck_count; ++i) {
        const double u = rng.uniform(-1.0, 1.0);
        const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double s = std::sqrt(1.0 - u * u);
        const Vec3 dir{s * std::cos(phi), s * std::sin(phi), u};
        const Vec3 mid = shrink(body, spec.sat_thickness_mm + 0.5 * spec.muscle_thickness_mm);
        specks.push_back({{dir[0] * mid[0], dir[1] * mid[1], dir[2] * mid[2]},
                          rng.uniform(kSpeckRadiusMin, kSpeckRadiusMax)});
    }

    auto inside = [](const Vec3& p, const Sphere& s) {
        const double dx = p[0] - s.c[0];
        const double dy = p[1] - s.c[1];
        const double dz = p[2] - s.c[2];
        return dx * dx + dy * dy + dz * dz <= s.r * s.r;
    };

    LabelMask mask(g, code(ClassId::background));
    std::vector<float> image(g.voxel_count(), phantom_hu::air);
    for (std::int64_t z = 0; z < g.dims[2]; ++z) {
        for (std::int64_t y = 0; y < g.dims[1]; ++y) {
            for (std::int64_t x = 0; x < g.dims[0]; ++x) {
                const Vec3 p = g.physical({x, y, z});
                const std::size_t i = mask.linear(x, y, z);
                if (ellipsoid_r2(p, body) > 1.0) {
                    continue;
                }
                ClassId label = ClassId::background;
                float hu = phantom_hu::cavity;
                if (ellipsoid_r2(p, muscle_outer) > 1.0) {
                    label = ClassId::sat;
                    hu = phantom_hu::sat;
                } else if (ellipsoid_r2(p, cavity) > 1.0) {
                    label = ClassId::sm;
                    hu = phantom_hu::muscle;
                    for (const auto& s : specks) {
                        if (inside(p, s)) {
                            label = ClassId::imat;
                            hu = phantom_hu::imat;
                            break;
                        }
                    }
                } else if (ellipsoid_r2(p, bone) <= 1.0) {
                    label = ClassId::bone;
                    hu = phantom_hu::bone;
                } else {
                    for (const auto& s : vat) {
                        if (inside(p, s)) {
                            label = ClassId::vat;
                            hu = phantom_hu::vat;
                            break;
                        }
                    }
                }
                mask[i] = code(label);
                image[i] = hu;
            }
        }
    }

    // A speck that grazes the wall surface is not intermuscular; demote any
    // IMAT component with a non-muscle neighbor back to muscle.
    if (!specks.empty()) {
        BinaryMask imat(g, 0);
        for (std::size_t i = 0; i < mask.size(); ++i) {
            imat[i] = mask[i] == code(ClassId::imat) ? 1 : 0;
        }
        const Components comps = label_components(imat);
        std::vector<std::uint8_t> enclosed(comps.count() + 1, 1);
        for (std::size_t i = 0; i < mask.size(); ++i) {
            const auto l = comps.labels[i];
            if (l == 0) {
                continue;
            }
            for_each_neighbor6(g, i, [&](std::size_t n) {
                if (comps.labels[n] != l && mask[n] != code(ClassId::sm)) {
                    enclosed[static_cast<std::size_t>(l)] = 0;
                }
            });
        }
        for (std::size_t i = 0; i < mask.size(); ++i) {
            const auto l = comps.labels[i];
            if (l != 0 && enclosed[static_cast<std::size_t>(l)] == 0) {
                mask[i] = code(ClassId::sm);
                image[i] = phantom_hu::muscle;
            }
        }
    }

    if (spec.noise_sd_hu > 0.0) {
        Rng noise(derive_seed(spec.seed, {hash_string("phantom-noise")}));
        for (auto& v : image) {
            v = static_cast<float>(v + spec.noise_sd_hu * noise.normal());
        }
    }
    return {make_volume(g, std::move(image)), std::move(mask)};
}

void to_json(nlohmann::json& j, const PhantomSpec& s) {
    j = nlohmann::json{{"seed", s.seed},
                       {"body_half_axes_mm", s.body_half_axes_mm},
                       {"sat_thickness_mm", s.sat_thickness_mm},
                       {"muscle_thickness_mm", s.muscle_thickness_mm},
                       {"bone_half_axes_mm", s.bone_half_axes_mm},
                       {"vat_fraction", s.vat_fraction},
                       {"imat_speck_count", s.imat_speck_count},
                       {"noise_sd_hu", s.noise_sd_hu},
                       {"spacing_mm", s.spacing_mm},
                       {"margin_mm", s.margin_mm}};
}

void from_json(const nlohmann::json& j, PhantomSpec& s) {
    static const std::array<std::string_view, 10> kKeys = {
        "seed",         "body_half_axes_mm", "sat_thickness_mm", "muscle_thickness_mm", "bone_half_axes_mm",
        "vat_fraction", "imat_speck_count",  "noise_sd_hu",      "spacing_mm",          "margin_mm"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
            throw UsageError("phantom spec: unknown key '" + key + "'");
        }
    }
    PhantomSpec d;
    s.seed = j.value("seed", d.seed);
    s.body_half_axes_mm = j.value("body_half_axes_mm", d.body_half_axes_mm);
    s.sat_thickness_mm = j.value("sat_thickness_mm", d.sat_thickness_mm);
    s.muscle_thickness_mm = j.value("muscle_thickness_mm", d.muscle_thickness_mm);
    s.bone_half_axes_mm = j.value("bone_half_axes_mm", d.bone_half_axes_mm);
    s.vat_fraction = j.value("vat_fraction", d.vat_fraction);
    s.imat_speck_count = j.value("imat_speck_count", d.imat_speck_count);
    s.noise_sd_hu = j.value("noise_sd_hu", d.noise_sd_hu);
    s.spacing_mm = j.value("spacing_mm", d.spacing_mm);
    s.margin_mm = j.value("margin_mm", d.margin_mm);
}

}  // namespace bcseg
