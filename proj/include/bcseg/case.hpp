#pragma once

#include <string>
#include <string_view>

#include "bcseg/volume.hpp"

namespace bcseg {

/// Scan coverage tag used to stratify cross-validation folds.
enum class ScanType { whole_body, chest, abdomen };

[[nodiscard]] std::string_view scan_type_name(ScanType t) noexcept;
/// Accepts "whole_body" / "whole-body", "chest", "abdomen". Throws DataError.
[[nodiscard]] ScanType parse_scan_type(std::string_view text);

/// One annotated scan: image and mask share a geometry.
struct Case {
    std::string id;
    ScanType scan_type = ScanType::whole_body;
    Volume image;
    LabelMask mask;
};

}  // namespace bcseg
