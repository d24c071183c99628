#include "bcseg/folds.hpp"

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"
#include "bcseg/rng.hpp"

namespace bcseg {

FoldPlan folds_from_assignment(std::vector<int> fold_of, int k) {
    if (k < 3) {
        throw UsageError("folds: need at least 3 folds (train, validation, test)");
    }
    FoldPlan plan;
    plan.fold_count = k;
    plan.fold_of = std::move(fold_of);
    for (int f : plan.fold_of) {
        if (f < 0 || f >= k) {
            throw DataError("folds: fold index out of range");
        }
    }
    for (int r = 0; r < k; ++r) {
        FoldAssignment a;
        a.k = r;
        const int val = (r + 1) % k;
        for (std::size_t i = 0; i < plan.fold_of.size(); ++i) {
            const int f = plan.fold_of[i];
            (f == r ? a.test : f == val ? a.validation : a.train).push_back(i);
        }
        plan.assignments.push_back(std::move(a));
    }
    return plan;
}

FoldPlan make_folds(std::span<const ScanType> scan_types, int k, std::uint64_t seed) {
    if (k < 3) {
        throw UsageError("folds: need at least 3 folds (train, validation, test)");
    }
    if (scan_types.size() < static_cast<std::size_t>(k)) {
        throw UsageError("folds: " + std::to_string(scan_types.size()) + " cases cannot fill " + std::to_string(k) +
                         " folds");
    }
    std::vector<int> fold_of(scan_types.size(), -1);
    std::size_t dealt = 0;
    for (const ScanType type : {ScanType::whole_body, ScanType::chest, ScanType::abdomen}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < scan_types.size(); ++i) {
            if (scan_types[i] == type) {
                members.push_back(i);
            }
        }
        Rng rng(derive_seed(seed, {hash_string("folds"), static_cast<std::uint64_t>(type)}));
        rng.shuffle(std::span<std::size_t>(members));
        for (auto i : members) {
            fold_of[i] = static_cast<int>(dealt++ % static_cast<std::size_t>(k));
        }
    }
    return folds_from_assignment(std::move(fold_of), k);
}

void to_json(nlohmann::json& j, const FoldPlan& p) {
    j = nlohmann::json{{"fold_count", p.fold_count}, {"fold_of", p.fold_of}};
}

void from_json(const nlohmann::json& j, FoldPlan& p) {
    p = folds_from_assignment(j.at("fold_of").get<std::vector<int>>(), j.at("fold_count").get<int>());
}

}  // namespace bcseg
