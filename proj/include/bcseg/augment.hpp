#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>

#include <nlohmann/json_fwd.hpp>

#include "bcseg/rng.hpp"
#include "bcseg/volume.hpp"

namespace bcseg {

/// Per-transform probability and parameter range for on-the-fly augmentation.
struct AugmentSpec {
    struct Scale {
        double probability = 0.5;
        double min = 0.9;
        double max = 1.1;
    } scale;
    struct Rotation {
        double probability = 0.5;
        double max_deg = 10.0;  // per axis, symmetric
    } rotation;
    struct Translation {
        double probability = 0.5;
        double max_mm = 10.0;  // per axis, symmetric
    } translation;
    struct Crop {
        double probability = 0.5;
        int max_voxels = 8;  // per face
    } crop;
    struct DensityShift {
        double probability = 0.5;
        double max_hu = 50.0;  // symmetric
    } density_shift;
    struct Noise {
        double probability = 0.5;
        double min_sd = 0.0;
        double max_sd = 20.0;
    } noise;
    struct Smoothing {
        double probability = 0.5;
        double min_sd = 0.0;
        double max_sd = 1.0;  // mm
    } smoothing;

    /// Spec with every probability set to p.
    [[nodiscard]] static AugmentSpec with_probability(double p);
    /// Throws UsageError on probabilities outside [0,1] or inverted ranges.
    void validate() const;
};

/// One concrete draw. Unset members are transforms that were not selected.
/// Application order is fixed: scale, rotation, translation, crop (one
/// combined resampling), then density shift, noise, smoothing.
struct AugmentSample {
    std::optional<double> scale;
    std::optional<Vec3> rotation_deg;
    std::optional<Vec3> translation_mm;
    /// Voxels blanked per face: -x, +x, -y, +y, -z, +z.
    std::optional<std::array<int, 6>> crop;
    std::optional<double> density_shift_hu;
    struct Noise {
        double sd_hu;
        std::uint64_t seed;
        bool operator==(const Noise&) const = default;
    };
    std::optional<Noise> noise;
    std::optional<double> smoothing_sd_mm;

    [[nodiscard]] bool is_identity() const noexcept;
    [[nodiscard]] bool has_geometric() const noexcept { return scale || rotation_deg || translation_mm || crop; }
    [[nodiscard]] int transform_count() const noexcept;
    bool operator==(const AugmentSample&) const = default;
};

[[nodiscard]] AugmentSample draw(const AugmentSpec& spec, Rng& rng);

struct PatchPairImages {
    Volume image;
    LabelMask mask;
};

/// Applies a sample to a paired patch. The geometric part is a single affine
/// map about the patch's geometric center, sampled once: trilinear (pad
/// kPadHu) for the image and nearest (pad background) for the mask. Intensity
/// steps touch the image only. Output dims equal input dims.
[[nodiscard]] PatchPairImages apply(const AugmentSample& sample, const Volume& image, const LabelMask& mask);

void to_json(nlohmann::json& j, const AugmentSpec& s);
void from_json(const nlohmann::json& j, AugmentSpec& s);
void to_json(nlohmann::json& j, const AugmentSample& s);

}  // namespace bcseg
