#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bcseg/backend.hpp"
#include "bcseg/session.hpp"
#include "bcseg/volume.hpp"

namespace bcseg {

struct InferenceConfig {
    std::int64_t patch_side = 80;
    std::int64_t stride = 40;

    void validate() const;
};

/// Window origins on the isotropic grid, padded up to at least patch_side per axis.
struct TilePlan {
    Index3 dims{};         // volume dims
    Index3 padded_dims{};  // max(dims, patch_side) per axis
    std::int64_t patch_side = 80;
    std::int64_t stride = 40;
    std::vector<Index3> origins;  // x fastest, then y, then z
};

/// Origins 0, s, 2s, ... while the window ends inside the axis, then
/// max(0, dim - patch_side); duplicates removed.
[[nodiscard]] std::vector<std::int64_t> axis_origins(std::int64_t dim, std::int64_t patch_side, std::int64_t stride);
[[nodiscard]] TilePlan plan_tiles(const Geometry& geometry, std::int64_t patch_side = 80, std::int64_t stride = 40);

/// Channel-major probabilities on the volume's geometry.
struct ProbVolume {
    Geometry geometry;
    std::uint32_t channels = 0;
    std::vector<float> probs;  // channels x voxel_count
    std::vector<std::uint32_t> coverage;

    [[nodiscard]] std::size_t voxel_count() const noexcept { return coverage.size(); }
    [[nodiscard]] float at(std::uint32_t channel, std::size_t voxel) const noexcept {
        return probs[channel * voxel_count() + voxel];
    }
};

/// Sends every window (normalized) and averages the responses uniformly.
/// With several backends the windows are split among them, one thread each.
[[nodiscard]] ProbVolume predict_volume(const Volume& volume, std::span<BackendHandle* const> backends,
                                        const TilePlan& plan);
[[nodiscard]] ProbVolume predict_volume(const Volume& volume, BackendHandle& backend, const TilePlan& plan);

/// Per-voxel argmax of the channels; ties go to the lowest channel.
[[nodiscard]] LabelMask argmax_labels(const ProbVolume& p);

/// Channel indices to class codes for a session mode (identity in joint mode).
[[nodiscard]] LabelMask channel_labels_to_classes(const LabelMask& channels, const HelloMode& mode);

/// Combines one separate-mode (2-channel) volume per class: each voxel takes
/// the class with the highest foreground probability if it exceeds 0.5,
/// otherwise background. Ties go to the lower class code.
[[nodiscard]] LabelMask combine_separate(std::span<const ProbVolume> volumes, std::span<const ClassId> classes);

/// Native volume in, native-grid labels out: resample to 1 mm, predict,
/// argmax, map back with nearest-neighbour lookup.
[[nodiscard]] LabelMask segment_case(const Volume& native, std::span<BackendHandle* const> backends,
                                     const InferenceConfig& cfg, const HelloMode& mode = {});
[[nodiscard]] LabelMask segment_case(const Volume& native, BackendHandle& backend, const InferenceConfig& cfg,
                                     const HelloMode& mode = {});

/// Separate-mode counterpart: one 2-channel backend per class, combined with combine_separate.
[[nodiscard]] LabelMask segment_case_separate(const Volume& native, std::span<BackendHandle* const> per_class,
                                              std::span<const ClassId> classes, const InferenceConfig& cfg);

void to_json(nlohmann::json& j, const InferenceConfig& c);
void from_json(const nlohmann::json& j, InferenceConfig& c);

}  // namespace bcseg
