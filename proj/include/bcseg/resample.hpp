#pragma once

#include "bcseg/volume.hpp"

namespace bcseg {

/// Trilinear blend of the 8 voxel centers around `point_mm`; kPadHu outside the
/// voxel-center hull. Throws DataError on a non-finite point.
[[nodiscard]] float trilinear_sample(const Volume& volume, const Vec3& point_mm);

/// Same blend at a continuous voxel index (no physical conversion, no finiteness check).
[[nodiscard]] float trilinear_at_index(const Volume& volume, const Vec3& index, float pad = kPadHu) noexcept;

/// Output grid of resample_to_isotropic: unit spacing, origin kept,
/// dims_k = max(1, round(dims_k * spacing_k)).
[[nodiscard]] Geometry isotropic_geometry(const Geometry& native);

/// Trilinear resampling onto isotropic_geometry(). Unit-spaced input is copied verbatim.
[[nodiscard]] Volume resample_to_isotropic(const Volume& volume);

/// Nearest-center label transfer in physical coordinates. Target voxels whose
/// nearest source index falls outside the source grid become background.
[[nodiscard]] LabelMask resample_mask(const LabelMask& mask, const Geometry& target);

}  // namespace bcseg
