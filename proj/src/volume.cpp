#include "bcseg/volume.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <string>

#include "bcseg/error.hpp"

namespace bcseg {

std::string_view class_name(ClassId c) noexcept {
    switch (c) {
        case ClassId::background: return "background";
        case ClassId::vat: return "VAT";
        case ClassId::sat: return "SAT";
        case ClassId::imat: return "IMAT";
        case ClassId::sm: return "SM";
        case ClassId::bone: return "Bone";
    }
    return "?";
}

ClassId parse_class(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    for (int c = 0; c < kClassCount; ++c) {
        std::string name(class_name(static_cast<ClassId>(c)));
        std::transform(name.begin(), name.end(), name.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        if (name == lower) {
            return static_cast<ClassId>(c);
        }
    }
    int value = -1;
    const auto [ptr, ec] = std::from_chars(lower.data(), lower.data() + lower.size(), value);
    if (ec == std::errc{} && ptr == lower.data() + lower.size() && value >= 0 && value < kClassCount) {
        return static_cast<ClassId>(value);
    }
    throw UsageError("unknown class '" + std::string(text) + "'");
}

void Geometry::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1) {
            throw DataError("geometry: dims must be >= 1 on every axis");
        }
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
            throw DataError("geometry: non-positive spacing");
        }
        if (!std::isfinite(origin[a])) {
            throw DataError("geometry: non-finite origin");
        }
    }
}

Index3 Geometry::nearest_index(const Vec3& p) const noexcept {
    const Vec3 c = continuous_index(p);
    return {static_cast<std::int64_t>(std::floor(c[0] + 0.5)), static_cast<std::int64_t>(std::floor(c[1] + 0.5)),
            static_cast<std::int64_t>(std::floor(c[2] + 0.5))};
}

Volume make_volume(const Geometry& geometry, std::vector<float> data) {
    geometry.validate();
    if (data.size() != geometry.voxel_count()) {
        throw DataError("volume: dims/payload mismatch (" + std::to_string(data.size()) + " samples for " +
                        std::to_string(geometry.voxel_count()) + " voxels)");
    }
    for (float& v : data) {
        if (!std::isfinite(v)) {
            throw DataError("volume: non-finite sample");
        }
        v = std::clamp(v, kMinHu, kMaxHu);
    }
    return Volume(geometry, std::move(data));
}

void validate_mask(const LabelMask& mask) {
    mask.geometry().validate();
    if (mask.size() != mask.geometry().voxel_count()) {
        throw DataError("mask: dims/payload mismatch");
    }
    for (const auto v : mask.data()) {
        if (!is_valid_class_code(v)) {
            throw DataError("mask: invalid class code " + std::to_string(v));
        }
    }
}

std::vector<std::uint8_t> label_set(const LabelMask& mask) {
    std::array<bool, 256> seen{};
    for (const auto v : mask.data()) {
        seen[v] = true;
    }
    std::vector<std::uint8_t> out;
    for (int v = 0; v < 256; ++v) {
        if (seen[static_cast<std::size_t>(v)]) {
            out.push_back(static_cast<std::uint8_t>(v));
        }
    }
    return out;
}

}  // namespace bcseg
