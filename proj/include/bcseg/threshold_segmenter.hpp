#pragma once

#include <nlohmann/json_fwd.hpp>

#include "bcseg/error.hpp"
#include "bcseg/volume.hpp"

namespace bcseg {

struct HuInterval {
    float lo;
    float hi;
    [[nodiscard]] bool contains(float v) const noexcept { return v >= lo && v <= hi; }
};

/// Closed HU windows per tissue family plus the body-extraction threshold.
struct HuWindows {
    HuInterval fat{-190.0F, -30.0F};
    HuInterval muscle{-29.0F, 150.0F};
    HuInterval bone{151.0F, kMaxHu};
    /// Voxels strictly above this value seed body extraction.
    float body_min = -500.0F;

    /// Throws UsageError unless fat < muscle < bone and the intervals are disjoint.
    void validate() const;
    /// Every bound shifted by `delta`.
    [[nodiscard]] HuWindows shifted(float delta) const noexcept;
};

/// Intermediate 3-way partition inside the body, before the fat split.
enum class TissueFamily : std::uint8_t { none = 0, fat = 1, muscle = 2, bone = 3 };

struct TissuePartition {
    BinaryMask body;
    Image3<std::uint8_t> family;  // TissueFamily codes
};

/// Thrown when no voxel exceeds the body threshold.
class EmptyBodyError : public DataError {
public:
    EmptyBodyError() : DataError("threshold_segment: empty body (no voxel above the body threshold)") {}
};

/// Stages (1)-(2): body = hole-filled largest component above body_min, then
/// HU windowing into fat / muscle / bone. Throws EmptyBodyError.
[[nodiscard]] TissuePartition partition_tissues(const Volume& volume, const HuWindows& windows);

/// Full bootstrap segmenter:
///  (1) body extraction; (2) windowing;
///  (3) the muscle wall (closing of the muscle window, radius 3) separates fat:
///      fat components whose every neighbor is muscle are IMAT; the remaining
///      fat outside the wall is SAT when its component touches non-body voxels
///      and VAT otherwise; fat swallowed by the wall inherits the label of the
///      nearest classified fat along fat voxels;
///  (4) 3x3x3 median filter on the label codes.
/// Throws EmptyBodyError.
[[nodiscard]] LabelMask threshold_segment(const Volume& volume, const HuWindows& windows = {});

inline constexpr int kWallClosingRadius = 3;
inline constexpr int kMedianRadius = 1;

/// 3x3x3 (radius 1) median of label codes; borders replicate the edge voxel.
[[nodiscard]] LabelMask median_filter_labels(const LabelMask& labels);

void to_json(nlohmann::json& j, const HuWindows& w);
void from_json(const nlohmann::json& j, HuWindows& w);

}  // namespace bcseg

