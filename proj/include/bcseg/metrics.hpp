#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bcseg/volume.hpp"

namespace bcseg {

struct Overlap {
    std::int64_t pred = 0;
    std::int64_t truth = 0;
    std::int64_t intersection = 0;
};

/// Voxel counts of one class. Throws DataError when the geometries differ.
[[nodiscard]] Overlap class_overlap(const LabelMask& pred, const LabelMask& truth, ClassId c);

/// 2|A n B| / (|A| + |B|); 1 when both sets are empty.
[[nodiscard]] double dice(const LabelMask& pred, const LabelMask& truth, ClassId c);
/// |A n B| / |A u B|; 1 when both sets are empty.
[[nodiscard]] double jaccard(const LabelMask& pred, const LabelMask& truth, ClassId c);
[[nodiscard]] double dice(const Overlap& o) noexcept;
[[nodiscard]] double jaccard(const Overlap& o) noexcept;

/// What to record for a class absent from both masks.
enum class AbsentPolicy { score_one, skip };

[[nodiscard]] std::string_view absent_policy_name(AbsentPolicy p) noexcept;
/// "score_one" or "skip". Throws UsageError.
[[nodiscard]] AbsentPolicy parse_absent_policy(std::string_view text);

struct CaseMetrics {
    std::string case_id;
    /// Indexed by class code; background stays empty. Empty also when skipped.
    std::array<std::optional<double>, kClassCount> dice;
    std::array<std::optional<double>, kClassCount> jaccard;
    bool native_grid = true;

    bool operator==(const CaseMetrics&) const = default;
};

[[nodiscard]] CaseMetrics evaluate_case(const std::string& case_id, const LabelMask& pred, const LabelMask& truth,
                                        AbsentPolicy policy = AbsentPolicy::score_one);

/// Columns: case_id,class,dice,jaccard (skipped classes have empty cells).
void write_case_metrics_csv(std::ostream& out, const std::vector<CaseMetrics>& metrics);
/// Throws DataError on malformed rows.
[[nodiscard]] std::vector<CaseMetrics> read_case_metrics_csv(std::istream& in);

}  // namespace bcseg
