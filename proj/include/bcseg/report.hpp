#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "bcseg/metrics.hpp"
#include "bcseg/stats.hpp"

namespace bcseg {

struct ModelResults {
    std::string model;
    std::vector<CaseMetrics> cases;
};

enum class Metric { dice, jaccard };

[[nodiscard]] std::string_view metric_name(Metric m) noexcept;

struct CellStats {
    double mean = 0.0;
    double sd = 0.0;  // sample SD (n - 1); 0 for a single value
    int n = 0;
};

struct PairwiseTest {
    std::string model_a;
    std::string model_b;
    ClassId cls = ClassId::vat;
    int n = 0;
    TTestResult result;
    [[nodiscard]] bool significant() const noexcept { return result.p < 0.05; }
};

/// Rows per (model, metric), columns per tissue class.
struct ReportTable {
    std::vector<std::string> models;
    /// cells[model][metric][class code]
    std::vector<std::array<std::array<CellStats, kClassCount>, 2>> cells;
    /// Paired t-tests on per-case Dice for every model pair and class.
    std::vector<PairwiseTest> tests;
    AbsentPolicy absent_policy = AbsentPolicy::score_one;
};

[[nodiscard]] CellStats cell_stats(const std::vector<double>& values);

/// Aggregates CaseMetrics; cases are matched across models by case_id.
[[nodiscard]] ReportTable build_report(const std::vector<ModelResults>& runs,
                                       AbsentPolicy policy = AbsentPolicy::score_one);

[[nodiscard]] std::string format_report_text(const ReportTable& table);
void write_report_csv(std::ostream& out, const ReportTable& table);

/// Scores one model's native-grid predictions against ground truth. Every
/// case id must appear in both maps with matching geometry; all problems are
/// collected into a single DataError.
[[nodiscard]] ModelResults evaluate_run(const std::string& model, const std::map<std::string, LabelMask>& predictions,
                                        const std::map<std::string, LabelMask>& truths,
                                        AbsentPolicy policy = AbsentPolicy::score_one);

}  // namespace bcseg
