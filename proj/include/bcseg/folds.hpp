#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bcseg/case.hpp"

namespace bcseg {

/// Rotation k: test = fold k, validation = fold (k + 1) mod K, train = the rest.
/// Members are indices into the cohort, ascending.
struct FoldAssignment {
    int k = 0;
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;

    bool operator==(const FoldAssignment&) const = default;
};

struct FoldPlan {
    int fold_count = 0;
    /// fold_of[i] is the fold of case i.
    std::vector<int> fold_of;
    std::vector<FoldAssignment> assignments;

    bool operator==(const FoldPlan&) const = default;
};

/// Seeded stratified split: each scan type's cases are shuffled and dealt
/// round-robin, the dealing position carrying over from one type to the next
/// (whole-body, chest, abdomen), so every fold's type mix is within one case
/// of proportional and fold sizes differ by at most one.
/// Throws UsageError when k < 3 or there are fewer cases than folds.
[[nodiscard]] FoldPlan make_folds(std::span<const ScanType> scan_types, int k = 10, std::uint64_t seed = 1);

/// Rebuilds the rotations from a stored fold_of vector.
[[nodiscard]] FoldPlan folds_from_assignment(std::vector<int> fold_of, int k);

void to_json(nlohmann::json& j, const FoldPlan& p);
void from_json(const nlohmann::json& j, FoldPlan& p);

}  // namespace bcseg
