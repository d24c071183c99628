#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bcseg/case.hpp"

namespace bcseg {

struct CohortEntry {
    std::string id;
    std::filesystem::path image;
    /// Unset for scans still waiting for annotation.
    std::optional<std::filesystem::path> mask;
    ScanType scan_type = ScanType::whole_body;
};

/// JSON manifest: {"cases": [{"id", "image", "mask", "scan_type"}]}. Paths
/// are stored relative to the manifest and held absolute in memory.
struct Cohort {
    std::vector<CohortEntry> entries;

    [[nodiscard]] std::vector<ScanType> scan_types() const;
};

/// Throws DataError on unreadable or malformed manifests and duplicate ids.
[[nodiscard]] Cohort load_cohort(const std::filesystem::path& path);
void save_cohort(const Cohort& cohort, const std::filesystem::path& path);

/// Loads image and mask (native grid) and checks that they share a geometry.
[[nodiscard]] Case load_case(const CohortEntry& entry);
[[nodiscard]] std::vector<Case> load_cases(const Cohort& cohort);

/// Image and mask on the 1 mm grid used by the sampler.
[[nodiscard]] Case to_isotropic(const Case& native);

}  // namespace bcseg
