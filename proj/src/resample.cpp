#include "bcseg/resample.hpp"

#include <algorithm>
#include <cmath>

#include "bcseg/error.hpp"

namespace bcseg {

namespace {

// Points within this distance (in voxels) of the hull count as inside, so that
// coordinates that land on the last center up to rounding are not padded.
constexpr double kHullSlack = 1e-9;

}  // namespace

float trilinear_at_index(const Volume& volume, const Vec3& index, float pad) noexcept {
    const Index3& d = volume.dims();
    std::int64_t lo[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        const double c = index[a];
        const double hi = static_cast<double>(d[a] - 1);
        if (c < -kHullSlack || c > hi + kHullSlack) {
            return pad;
        }
        const double cc = std::clamp(c, 0.0, hi);
        auto l = static_cast<std::int64_t>(cc);  // cc >= 0, truncation is floor
        if (l >= d[a] - 1) {
            l = std::max<std::int64_t>(d[a] - 2, 0);
        }
        lo[a] = l;
        frac[a] = d[a] == 1 ? 0.0 : cc - static_cast<double>(l);
    }
    const std::int64_t x1 = std::min(lo[0] + 1, d[0] - 1);
    const std::int64_t y1 = std::min(lo[1] + 1, d[1] - 1);
    const std::int64_t z1 = std::min(lo[2] + 1, d[2] - 1);
    const double fx = frac[0];
    const double fy = frac[1];
    const double fz = frac[2];
    auto v = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
        return static_cast<double>(volume.at(x, y, z));
    };
    const double c00 = v(lo[0], lo[1], lo[2]) * (1 - fx) + v(x1, lo[1], lo[2]) * fx;
    const double c10 = v(lo[0], y1, lo[2]) * (1 - fx) + v(x1, y1, lo[2]) * fx;
    const double c01 = v(lo[0], lo[1], z1) * (1 - fx) + v(x1, lo[1], z1) * fx;
    const double c11 = v(lo[0], y1, z1) * (1 - fx) + v(x1, y1, z1) * fx;
    const double c0 = c00 * (1 - fy) + c10 * fy;
    const double c1 = c01 * (1 - fy) + c11 * fy;
    return static_cast<float>(c0 * (1 - fz) + c1 * fz);
}

float trilinear_sample(const Volume& volume, const Vec3& point_mm) {
    for (const double p : point_mm) {
        if (!std::isfinite(p)) {
            throw DataError("trilinear_sample: non-finite point");
        }
    }
    return trilinear_at_index(volume, volume.geometry().continuous_index(point_mm));
}

Geometry isotropic_geometry(const Geometry& native) {
    native.validate();
    Geometry g;
    g.origin = native.origin;
    for (int a = 0; a < 3; ++a) {
        g.dims[a] = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::llround(static_cast<double>(native.dims[a]) * native.spacing[a])));
        g.spacing[a] = 1.0;
    }
    return g;
}

Volume resample_to_isotropic(const Volume& volume) {
    const Geometry& in = volume.geometry();
    if (in.is_unit_isotropic()) {
        return volume;
    }
    const Geometry out_geom = isotropic_geometry(in);
    Volume out(out_geom);
    const Index3& d = out_geom.dims;
    for (std::int64_t z = 0; z < d[2]; ++z) {
        for (std::int64_t y = 0; y < d[1]; ++y) {
            for (std::int64_t x = 0; x < d[0]; ++x) {
                // Output voxel j sits at origin + j mm, i.e. input index j / spacing.
                const Vec3 idx{static_cast<double>(x) / in.spacing[0], static_cast<double>(y) / in.spacing[1],
                               static_cast<double>(z) / in.spacing[2]};
                out.at(x, y, z) = trilinear_at_index(volume, idx);
            }
        }
    }
    return out;
}

LabelMask resample_mask(const LabelMask& mask, const Geometry& target) {
    target.validate();
    const Geometry& src = mask.geometry();
    if (src == target) {
        return mask;
    }
    LabelMask out(target, code(ClassId::background));
    // Separable: the nearest source index per axis depends only on that axis.
    std::array<std::vector<std::int64_t>, 3> lut;
    for (int a = 0; a < 3; ++a) {
        lut[a].resize(static_cast<std::size_t>(target.dims[a]));
        for (std::int64_t j = 0; j < target.dims[a]; ++j) {
            const double p = target.origin[a] + static_cast<double>(j) * target.spacing[a];
            const auto i = static_cast<std::int64_t>(std::floor((p - src.origin[a]) / src.spacing[a] + 0.5));
            lut[a][static_cast<std::size_t>(j)] = (i >= 0 && i < src.dims[a]) ? i : -1;
        }
    }
    for (std::int64_t z = 0; z < target.dims[2]; ++z) {
        const auto sz = lut[2][static_cast<std::size_t>(z)];
        if (sz < 0) {
            continue;
        }
        for (std::int64_t y = 0; y < target.dims[1]; ++y) {
            const auto sy = lut[1][static_cast<std::size_t>(y)];
            if (sy < 0) {
                continue;
            }
            for (std::int64_t x = 0; x < target.dims[0]; ++x) {
                const auto sx = lut[0][static_cast<std::size_t>(x)];
                if (sx >= 0) {
                    out.at(x, y, z) = mask.at(sx, sy, sz);
                }
            }
        }
    }
    return out;
}

}  // namespace bcseg
