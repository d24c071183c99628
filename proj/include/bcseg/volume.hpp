#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace bcseg {

/// Tissue labels carried by every mask voxel.
enum class ClassId : std::uint8_t {
    background = 0,
    vat = 1,
    sat = 2,
    imat = 3,
    sm = 4,
    bone = 5,
};

inline constexpr int kClassCount = 6;

/// The five tissues of interest, in label-code order.
inline constexpr std::array<ClassId, 5> kTissues = {
    ClassId::vat, ClassId::sat, ClassId::imat, ClassId::sm, ClassId::bone};

[[nodiscard]] constexpr std::uint8_t code(ClassId c) noexcept { return static_cast<std::uint8_t>(c); }
[[nodiscard]] constexpr bool is_valid_class_code(std::uint8_t v) noexcept { return v < kClassCount; }

/// Short display name: "background", "VAT", "SAT", "IMAT", "SM", "Bone".
[[nodiscard]] std::string_view class_name(ClassId c) noexcept;

/// Parses a display name (case-insensitive) or a numeric code. Throws UsageError.
[[nodiscard]] ClassId parse_class(std::string_view text);

/// HU range accepted on ingest; values outside are clamped.
inline constexpr float kMinHu = -1024.0F;
inline constexpr float kMaxHu = 3071.0F;
/// Value used for every out-of-support sample (air).
inline constexpr float kPadHu = -1024.0F;

using Vec3 = std::array<double, 3>;
using Index3 = std::array<std::int64_t, 3>;

/// Axis-aligned sampling grid. Axis order everywhere is (x, y, z); storage is
/// C-order with z slowest.
struct Geometry {
    Index3 dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    /// Physical position (mm) of the center of voxel (0, 0, 0).
    Vec3 origin{0.0, 0.0, 0.0};

    /// Throws DataError on non-positive dims or spacing.
    void validate() const;

    [[nodiscard]] std::size_t voxel_count() const noexcept {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
               static_cast<std::size_t>(dims[2]);
    }
    [[nodiscard]] bool is_unit_isotropic() const noexcept {
        return spacing[0] == 1.0 && spacing[1] == 1.0 && spacing[2] == 1.0;
    }
    [[nodiscard]] bool contains(const Index3& i) const noexcept {
        return i[0] >= 0 && i[1] >= 0 && i[2] >= 0 && i[0] < dims[0] && i[1] < dims[1] && i[2] < dims[2];
    }
    [[nodiscard]] Vec3 physical(const Index3& i) const noexcept {
        return {origin[0] + static_cast<double>(i[0]) * spacing[0],
                origin[1] + static_cast<double>(i[1]) * spacing[1],
                origin[2] + static_cast<double>(i[2]) * spacing[2]};
    }
    [[nodiscard]] Vec3 continuous_index(const Vec3& p) const noexcept {
        return {(p[0] - origin[0]) / spacing[0], (p[1] - origin[1]) / spacing[1],
                (p[2] - origin[2]) / spacing[2]};
    }
    /// Index of the voxel whose center is closest to p (may lie outside the grid).
    [[nodiscard]] Index3 nearest_index(const Vec3& p) const noexcept;

    bool operator==(const Geometry&) const = default;
};

/// Dense 3-D array bound to a geometry.
template <typename T>
class Image3 {
public:
    Image3() = default;
    explicit Image3(const Geometry& geometry, T fill = T{})
        : geometry_(geometry), data_(geometry.voxel_count(), fill) {}
    Image3(const Geometry& geometry, std::vector<T> data) : geometry_(geometry), data_(std::move(data)) {}

    [[nodiscard]] const Geometry& geometry() const noexcept { return geometry_; }
    [[nodiscard]] const Index3& dims() const noexcept { return geometry_.dims; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    [[nodiscard]] std::size_t linear(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
        return static_cast<std::size_t>((z * geometry_.dims[1] + y) * geometry_.dims[0] + x);
    }
    [[nodiscard]] Index3 unravel(std::size_t i) const noexcept {
        const auto nx = static_cast<std::size_t>(geometry_.dims[0]);
        const auto ny = static_cast<std::size_t>(geometry_.dims[1]);
        return {static_cast<std::int64_t>(i % nx), static_cast<std::int64_t>((i / nx) % ny),
                static_cast<std::int64_t>(i / (nx * ny))};
    }

    T& at(std::int64_t x, std::int64_t y, std::int64_t z) noexcept { return data_[linear(x, y, z)]; }
    const T& at(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept { return data_[linear(x, y, z)]; }
    T& at(const Index3& i) noexcept { return at(i[0], i[1], i[2]); }
    const T& at(const Index3& i) const noexcept { return at(i[0], i[1], i[2]); }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    [[nodiscard]] std::span<T> data() noexcept { return data_; }
    [[nodiscard]] std::span<const T> data() const noexcept { return data_; }
    [[nodiscard]] std::vector<T>& storage() noexcept { return data_; }

    bool operator==(const Image3&) const = default;

private:
    Geometry geometry_;
    std::vector<T> data_;
};

/// CT densities in HU, clamped to [kMinHu, kMaxHu].
using Volume = Image3<float>;
/// Per-voxel ClassId codes.
using LabelMask = Image3<std::uint8_t>;
/// 0/1 voxel sets used by the morphology and segmentation stages.
using BinaryMask = Image3<std::uint8_t>;

/// Builds a Volume, rejecting non-finite samples and clamping to the CT range.
[[nodiscard]] Volume make_volume(const Geometry& geometry, std::vector<float> data);

/// Throws DataError if any voxel is not a valid ClassId code.
void validate_mask(const LabelMask& mask);

/// Sorted distinct label codes present in a mask.
[[nodiscard]] std::vector<std::uint8_t> label_set(const LabelMask& mask);

}  // namespace bcseg
