#pragma once

#include <cstdint>
#include <vector>

#include "bcseg/volume.hpp"

namespace bcseg {

/// Binary morphology on 0/1 masks.
///
/// The structuring element of radius r is the (2r+1)^3 cube (the chessboard
/// ball). Connectivity for components and flood fills is 6. Dilation ignores
/// out-of-grid voxels; erosion treats them as foreground, so erosion and
/// dilation stay dual and opening/closing keep their ordering near borders.
enum class MorphOp { erode, dilate, open, close, fill_holes, largest_component };

[[nodiscard]] BinaryMask morphology(const BinaryMask& mask, MorphOp op, int radius = 1);

[[nodiscard]] BinaryMask erode(const BinaryMask& mask, int radius);
[[nodiscard]] BinaryMask dilate(const BinaryMask& mask, int radius);
/// Complement of the background connected (6-conn) to the grid border.
[[nodiscard]] BinaryMask fill_holes(const BinaryMask& mask);
/// Keeps the largest 6-connected component; ties go to the component met first in storage order.
[[nodiscard]] BinaryMask largest_component(const BinaryMask& mask);

/// 6-connected component labelling. Labels are 1..count in storage-order of
/// first appearance; 0 marks background.
struct Components {
    std::vector<std::int32_t> labels;
    std::vector<std::int64_t> sizes;  // sizes[k] is the voxel count of label k+1
    [[nodiscard]] std::size_t count() const noexcept { return sizes.size(); }
};

[[nodiscard]] Components label_components(const BinaryMask& mask);

/// Calls fn(neighbor_linear_index) for each in-grid 6-neighbor of voxel i.
template <typename Fn>
void for_each_neighbor6(const Geometry& g, std::size_t i, Fn&& fn) {
    const auto nx = static_cast<std::size_t>(g.dims[0]);
    const auto ny = static_cast<std::size_t>(g.dims[1]);
    const auto nz = static_cast<std::size_t>(g.dims[2]);
    const std::size_t plane = nx * ny;
    const std::size_t x = i % nx;
    const std::size_t y = (i / nx) % ny;
    const std::size_t z = i / plane;
    if (x > 0) fn(i - 1);
    if (x + 1 < nx) fn(i + 1);
    if (y > 0) fn(i - nx);
    if (y + 1 < ny) fn(i + nx);
    if (z > 0) fn(i - plane);
    if (z + 1 < nz) fn(i + plane);
}

}  // namespace bcseg
