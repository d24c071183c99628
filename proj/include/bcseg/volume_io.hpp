#pragma once

#include <filesystem>

#include "bcseg/volume.hpp"

namespace bcseg {

/// On-disk formats.
///  - nifti1: single-file .nii or .nii.gz, dtypes uint8/int16/float32, axis-aligned only.
///  - rvol: "<name>.json" sidecar {dims, spacing_mm, origin_mm, dtype: "f32"|"u8", order: "zyx"}
///    next to a little-endian "<name>.raw" payload.
enum class VolumeFormat { nifti1, rvol };

/// Picks the format from the extension: .nii/.nii.gz are NIfTI, everything else rvol.
[[nodiscard]] VolumeFormat format_from_path(const std::filesystem::path& path);

/// For rvol, strips a trailing .json/.raw so either file (or the bare stem) names the pair.
[[nodiscard]] std::filesystem::path rvol_base(const std::filesystem::path& path);

[[nodiscard]] Volume load_volume(const std::filesystem::path& path, VolumeFormat format);
[[nodiscard]] Volume load_volume(const std::filesystem::path& path);
[[nodiscard]] LabelMask load_mask(const std::filesystem::path& path, VolumeFormat format);
[[nodiscard]] LabelMask load_mask(const std::filesystem::path& path);

void save_volume(const Volume& volume, const std::filesystem::path& path, VolumeFormat format);
void save_volume(const Volume& volume, const std::filesystem::path& path);
void save_mask(const LabelMask& mask, const std::filesystem::path& path, VolumeFormat format);
void save_mask(const LabelMask& mask, const std::filesystem::path& path);

}  // namespace bcseg
