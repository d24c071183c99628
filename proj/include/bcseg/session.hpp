#pragma once

#include <cstdint>
#include <optional>

#include "bcseg/protocol.hpp"
#include "bcseg/volume.hpp"

namespace bcseg {

/// Session mode as carried in Hello metadata.
struct HelloMode {
    /// nullopt for joint mode, the target class for separate mode.
    std::optional<ClassId> target;
    [[nodiscard]] std::uint32_t class_count() const noexcept { return target ? 2 : kClassCount; }
};

[[nodiscard]] protocol::Hello make_hello(const HelloMode& mode, std::uint32_t patch_side);
/// Throws DataError on malformed metadata.
[[nodiscard]] HelloMode parse_hello_mode(const protocol::Hello& hello);

/// Normalized 1 x S^3 tensor of a cubic HU patch.
[[nodiscard]] protocol::TensorF32 normalized_tensor(const Volume& patch);

/// One-hot probabilities (C x S^3) from labels; separate mode maps the target class to channel 1.
[[nodiscard]] protocol::TensorF32 onehot_probabilities(const LabelMask& labels, const HelloMode& mode);
[[nodiscard]] protocol::TensorU8 onehot_labels(const LabelMask& labels, const HelloMode& mode);

/// Hard labels of a C x S^3 probability tensor on `geometry`: per-voxel argmax
/// (lowest channel wins ties), mapped back to class codes in separate mode.
[[nodiscard]] LabelMask patch_labels(const protocol::TensorF32& probs, const HelloMode& mode,
                                     const Geometry& geometry);

}  // namespace bcseg
