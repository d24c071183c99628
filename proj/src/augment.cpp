#include "bcseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"
#include "bcseg/resample.hpp"

namespace bcseg {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 multiply(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            for (int k = 0; k < 3; ++k) {
                r[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    return r;
}

/// cos/sin with exact values at multiples of 90 degrees so right-angle
/// rotations map voxel centers onto voxel centers exactly.
std::pair<double, double> cos_sin_deg(double deg) {
    const double quarter = deg / 90.0;
    if (quarter == std::round(quarter)) {
        switch (((static_cast<long long>(std::round(quarter)) % 4) + 4) % 4) {
            case 0: return {1.0, 0.0};
            case 1: return {0.0, 1.0};
            case 2: return {-1.0, 0.0};
            default: return {0.0, -1.0};
        }
    }
    const double rad = deg * std::numbers::pi / 180.0;
    return {std::cos(rad), std::sin(rad)};
}

/// Rotation R = Rz * Ry * Rx (extrinsic x, then y, then z).
Mat3 rotation_matrix(const Vec3& deg) {
    const auto [cx, sx] = cos_sin_deg(deg[0]);
    const auto [cy, sy] = cos_sin_deg(deg[1]);
    const auto [cz, sz] = cos_sin_deg(deg[2]);
    const Mat3 rx{{{1, 0, 0}, {0, cx, -sx}, {0, sx, cx}}};
    const Mat3 ry{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
    const Mat3 rz{{{cz, -sz, 0}, {sz, cz, 0}, {0, 0, 1}}};
    return multiply(rz, multiply(ry, rx));
}

Mat3 transpose(const Mat3& m) {
    Mat3 t{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            t[i][j] = m[j][i];
        }
    }
    return t;
}

void gaussian_smooth(Volume& image, double sd) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sd)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const double w = std::exp(-0.5 * (k * k) / (sd * sd));
        kernel[static_cast<std::size_t>(k + radius)] = w;
        sum += w;
    }
    for (auto& w : kernel) {
        w /= sum;
    }
    const Index3 d = image.dims();
    const std::int64_t stride[3] = {1, d[0], d[0] * d[1]};
    std::vector<float> tmp(image.size());
    std::vector<double> line;
    for (int axis = 0; axis < 3; ++axis) {
        const std::int64_t n = d[axis];
        const std::int64_t st = stride[axis];
        const int u = axis == 0 ? 1 : 0;
        const int v = axis == 2 ? 1 : 2;
        float* data = image.data().data();
        line.assign(static_cast<std::size_t>(n + 2 * radius), 0.0);
        for (std::int64_t b = 0; b < d[v]; ++b) {
            for (std::int64_t a = 0; a < d[u]; ++a) {
                const std::int64_t base = a * stride[u] + b * stride[v];
                for (std::int64_t k = -radius; k < n + radius; ++k) {
                    const std::int64_t q = std::clamp<std::int64_t>(k, 0, n - 1);
                    line[static_cast<std::size_t>(k + radius)] = static_cast<double>(data[base + q * st]);
                }
                for (std::int64_t p = 0; p < n; ++p) {
                    const double* src = line.data() + p;
                    double acc = 0.0;
                    for (std::size_t k = 0; k < kernel.size(); ++k) {
                        acc += kernel[k] * src[k];
                    }
                    tmp[static_cast<std::size_t>(base + p * st)] = static_cast<float>(acc);
                }
            }
        }
        std::copy(tmp.begin(), tmp.end(), image.data().begin());
    }
}

}  // namespace

AugmentSpec AugmentSpec::with_probability(double p) {
    AugmentSpec s;
    s.scale.probability = p;
    s.rotation.probability = p;
    s.translation.probability = p;
    s.crop.probability = p;
    s.density_shift.probability = p;
    s.noise.probability = p;
    s.smoothing.probability = p;
    return s;
}

void AugmentSpec::validate() const {
    for (const double p : {scale.probability, rotation.probability, translation.probability, crop.probability,
                           density_shift.probability, noise.probability, smoothing.probability}) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw UsageError("augment: probabilities must lie in [0,1]");
        }
    }
    const bool ok = scale.min > 0.0 && scale.min <= scale.max && std::isfinite(scale.max) &&
                    rotation.max_deg >= 0.0 && std::isfinite(rotation.max_deg) && translation.max_mm >= 0.0 &&
                    std::isfinite(translation.max_mm) && crop.max_voxels >= 0 && density_shift.max_hu >= 0.0 &&
                    std::isfinite(density_shift.max_hu) && noise.min_sd >= 0.0 && noise.min_sd <= noise.max_sd &&
                    std::isfinite(noise.max_sd) && smoothing.min_sd >= 0.0 && smoothing.min_sd <= smoothing.max_sd &&
                    std::isfinite(smoothing.max_sd);
    if (!ok) {
        throw UsageError("augment: invalid parameter range");
    }
}

bool AugmentSample::is_identity() const noexcept { return transform_count() == 0; }

int AugmentSample::transform_count() const noexcept {
    return static_cast<int>(scale.has_value()) + static_cast<int>(rotation_deg.has_value()) +
           static_cast<int>(translation_mm.has_value()) + static_cast<int>(crop.has_value()) +
           static_cast<int>(density_shift_hu.has_value()) + static_cast<int>(noise.has_value()) +
           static_cast<int>(smoothing_sd_mm.has_value());
}

AugmentSample draw(const AugmentSpec& spec, Rng& rng) {
    AugmentSample s;
    if (rng.bernoulli(spec.scale.probability)) {
        s.scale = rng.uniform(spec.scale.min, spec.scale.max);
    }
    if (rng.bernoulli(spec.rotation.probability)) {
        const double m = spec.rotation.max_deg;
        s.rotation_deg = Vec3{rng.uniform(-m, m), rng.uniform(-m, m), rng.uniform(-m, m)};
    }
    if (rng.bernoulli(spec.translation.probability)) {
        const double m = spec.translation.max_mm;
        s.translation_mm = Vec3{rng.uniform(-m, m), rng.uniform(-m, m), rng.uniform(-m, m)};
    }
    if (rng.bernoulli(spec.crop.probability)) {
        std::array<int, 6> faces{};
        for (auto& f : faces) {
            f = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.crop.max_voxels) + 1));
        }
        s.crop = faces;
    }
    if (rng.bernoulli(spec.density_shift.probability)) {
        s.density_shift_hu = rng.uniform(-spec.density_shift.max_hu, spec.density_shift.max_hu);
    }
    if (rng.bernoulli(spec.noise.probability)) {
        s.noise = AugmentSample::Noise{rng.uniform(spec.noise.min_sd, spec.noise.max_sd), rng.next_u64()};
    }
    if (rng.bernoulli(spec.smoothing.probability)) {
        s.smoothing_sd_mm = rng.uniform(spec.smoothing.min_sd, spec.smoothing.max_sd);
    }
    return s;
}

PatchPairImages apply(const AugmentSample& sample, const Volume& image, const LabelMask& mask) {
    if (image.dims() != mask.dims()) {
        throw DataError("augment: image and mask patches differ in shape");
    }
    PatchPairImages out{image, mask};
    if (sample.scale || sample.rotation_deg || sample.translation_mm) {
        // Forward map about the center c: p' = R * (s * (p - c)) + t + c.
        // Each output voxel samples the input at p = R^T (p' - c - t) / s + c.
        const double s = sample.scale.value_or(1.0);
        const Mat3 rinv = transpose(rotation_matrix(sample.rotation_deg.value_or(Vec3{0, 0, 0})));
        const Vec3 t = sample.translation_mm.value_or(Vec3{0, 0, 0});
        const Vec3 sp = image.geometry().spacing;
        const Index3 d = image.dims();
        Vec3 c{};
        for (int a = 0; a < 3; ++a) {
            c[a] = 0.5 * static_cast<double>(d[a] - 1);
        }
        // Source index as an affine function of the output index, worked out in mm so that
        // translation and anisotropic spacing are handled uniformly.
        Mat3 m{};
        Vec3 off{};
        for (int r = 0; r < 3; ++r) {
            for (int k = 0; k < 3; ++k) {
                m[r][k] = rinv[r][k] * sp[k] / (s * sp[r]);
            }
            off[r] = c[r] - (rinv[r][0] * t[0] + rinv[r][1] * t[1] + rinv[r][2] * t[2]) / (s * sp[r]);
        }
        for (std::int64_t z = 0; z < d[2]; ++z) {
            for (std::int64_t y = 0; y < d[1]; ++y) {
                const double dy = static_cast<double>(y) - c[1];
                const double dz = static_cast<double>(z) - c[2];
                Vec3 row{};
                for (int r = 0; r < 3; ++r) {
                    row[r] = off[r] + m[r][1] * dy + m[r][2] * dz;
                }
                for (std::int64_t x = 0; x < d[0]; ++x) {
                    const double dx = static_cast<double>(x) - c[0];
                    const Vec3 src{row[0] + m[0][0] * dx, row[1] + m[1][0] * dx, row[2] + m[2][0] * dx};
                    const std::size_t i = image.linear(x, y, z);
                    out.image[i] = trilinear_at_index(image, src);
                    bool inside = true;
                    Index3 nn{};
                    for (int a = 0; a < 3; ++a) {
                        const double r = src[a] + 0.5;
                        inside = inside && r >= 0.0 && r < static_cast<double>(d[a]);
                        nn[a] = inside ? static_cast<std::int64_t>(r) : 0;
                    }
                    out.mask[i] = inside ? mask.at(nn) : code(ClassId::background);
                }
            }
        }
    }
    if (sample.crop) {
        const auto& f = *sample.crop;
        const Index3 d = image.dims();
        for (std::int64_t z = 0; z < d[2]; ++z) {
            for (std::int64_t y = 0; y < d[1]; ++y) {
                for (std::int64_t x = 0; x < d[0]; ++x) {
                    const bool cropped = x < f[0] || x >= d[0] - f[1] || y < f[2] || y >= d[1] - f[3] ||
                                         z < f[4] || z >= d[2] - f[5];
                    if (cropped) {
                        const std::size_t i = image.linear(x, y, z);
                        out.image[i] = kPadHu;
                        out.mask[i] = code(ClassId::background);
                    }
                }
            }
        }
    }
    if (sample.density_shift_hu) {
        const auto shift = static_cast<float>(*sample.density_shift_hu);
        for (auto& v : out.image.data()) {
            v += shift;
        }
    }
    if (sample.noise && sample.noise->sd_hu > 0.0) {
        Rng rng(sample.noise->seed);
        const double sd = sample.noise->sd_hu;
        const std::span<float> data = out.image.data();
        for (std::size_t i = 0; i < data.size(); i += 2) {
            const auto [a, b] = rng.normal_pair();
            data[i] = static_cast<float>(data[i] + sd * a);
            if (i + 1 < data.size()) {
                data[i + 1] = static_cast<float>(data[i + 1] + sd * b);
            }
        }
    }
    if (sample.smoothing_sd_mm && *sample.smoothing_sd_mm > 0.0) {
        gaussian_smooth(out.image, *sample.smoothing_sd_mm / image.geometry().spacing[0]);
    }
    return out;
}

void to_json(nlohmann::json& j, const AugmentSpec& s) {
    j = nlohmann::json{
        {"scale", {{"probability", s.scale.probability}, {"min", s.scale.min}, {"max", s.scale.max}}},
        {"rotation", {{"probability", s.rotation.probability}, {"max_deg", s.rotation.max_deg}}},
        {"translation", {{"probability", s.translation.probability}, {"max_mm", s.translation.max_mm}}},
        {"crop", {{"probability", s.crop.probability}, {"max_voxels", s.crop.max_voxels}}},
        {"density_shift", {{"probability", s.density_shift.probability}, {"max_hu", s.density_shift.max_hu}}},
        {"noise", {{"probability", s.noise.probability}, {"min_sd", s.noise.min_sd}, {"max_sd", s.noise.max_sd}}},
        {"smoothing",
         {{"probability", s.smoothing.probability}, {"min_sd", s.smoothing.min_sd}, {"max_sd", s.smoothing.max_sd}}}};
}

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> keys, const std::string& where) {
    if (!j.is_object()) {
        throw UsageError(where + ": expected an object");
    }
    for (const auto& [key, value] : j.items()) {
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            throw UsageError(where + ": unknown key '" + key + "'");
        }
    }
}

}  // namespace

void from_json(const nlohmann::json& j, AugmentSpec& s) {
    check_keys(j, {"scale", "rotation", "translation", "crop", "density_shift", "noise", "smoothing"}, "augment");
    const AugmentSpec d;
    s = d;
    if (j.contains("scale")) {
        const auto& o = j.at("scale");
        check_keys(o, {"probability", "min", "max"}, "augment.scale");
        s.scale = {o.value("probability", d.scale.probability), o.value("min", d.scale.min),
                   o.value("max", d.scale.max)};
    }
    if (j.contains("rotation")) {
        const auto& o = j.at("rotation");
        check_keys(o, {"probability", "max_deg"}, "augment.rotation");
        s.rotation = {o.value("probability", d.rotation.probability), o.value("max_deg", d.rotation.max_deg)};
    }
    if (j.contains("translation")) {
        const auto& o = j.at("translation");
        check_keys(o, {"probability", "max_mm"}, "augment.translation");
        s.translation = {o.value("probability", d.translation.probability),
                         o.value("max_mm", d.translation.max_mm)};
    }
    if (j.contains("crop")) {
        const auto& o = j.at("crop");
        check_keys(o, {"probability", "max_voxels"}, "augment.crop");
        s.crop = {o.value("probability", d.crop.probability), o.value("max_voxels", d.crop.max_voxels)};
    }
    if (j.contains("density_shift")) {
        const auto& o = j.at("density_shift");
        check_keys(o, {"probability", "max_hu"}, "augment.density_shift");
        s.density_shift = {o.value("probability", d.density_shift.probability),
                           o.value("max_hu", d.density_shift.max_hu)};
    }
    if (j.contains("noise")) {
        const auto& o = j.at("noise");
        check_keys(o, {"probability", "min_sd", "max_sd"}, "augment.noise");
        s.noise = {o.value("probability", d.noise.probability), o.value("min_sd", d.noise.min_sd),
                   o.value("max_sd", d.noise.max_sd)};
    }
    if (j.contains("smoothing")) {
        const auto& o = j.at("smoothing");
        check_keys(o, {"probability", "min_sd", "max_sd"}, "augment.smoothing");
        s.smoothing = {o.value("probability", d.smoothing.probability), o.value("min_sd", d.smoothing.min_sd),
                       o.value("max_sd", d.smoothing.max_sd)};
    }
    s.validate();
}

void to_json(nlohmann::json& j, const AugmentSample& s) {
    j = nlohmann::json::object();
    if (s.scale) j["scale"] = *s.scale;
    if (s.rotation_deg) j["rotation_deg"] = *s.rotation_deg;
    if (s.translation_mm) j["translation_mm"] = *s.translation_mm;
    if (s.crop) j["crop"] = *s.crop;
    if (s.density_shift_hu) j["density_shift_hu"] = *s.density_shift_hu;
    if (s.noise) j["noise"] = {{"sd_hu", s.noise->sd_hu}, {"seed", s.noise->seed}};
    if (s.smoothing_sd_mm) j["smoothing_sd_mm"] = *s.smoothing_sd_mm;
}

}  // namespace bcseg
