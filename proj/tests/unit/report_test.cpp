#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "bcseg/error.hpp"
#include "bcseg/report.hpp"
#include "unit/test_support.hpp"

namespace bcseg {
namespace {

using testing::unit_geometry;

CaseMetrics uniform_case(const std::string& id, double d) {
    CaseMetrics m;
    m.case_id = id;
    for (const ClassId c : kTissues) {
        m.dice[code(c)] = d;
        m.jaccard[code(c)] = d / (2.0 - d);
    }
    return m;
}

TEST(Report, CellStatsUsesSampleSd) {
    const CellStats s = cell_stats({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_DOUBLE_EQ(s.sd, std::sqrt(5.0 / 3.0));
    EXPECT_EQ(s.n, 4);
    EXPECT_EQ(cell_stats({0.7}).sd, 0.0);
}

TEST(Report, PerfectPredictionsGiveOnes) {
    LabelMask m(unit_geometry(6, 1, 1), 0);
    for (std::size_t i = 0; i < 6; ++i) m[i] = static_cast<std::uint8_t>(i);
    const std::map<std::string, LabelMask> gt = {{"a", m}, {"b", m}};
    const ReportTable t = build_report({evaluate_run("unet", gt, gt)});
    const std::string text = format_report_text(t);
    EXPECT_NE(text.find("Dice     unet   1.000 ± 0.000  1.000 ± 0.000"), std::string::npos) << text;
    EXPECT_NE(text.find("Jaccard"), std::string::npos);
    for (const char* name : {"VAT", "SAT", "IMAT", "SM", "Bone"}) EXPECT_NE(text.find(name), std::string::npos);
}

TEST(Report, LayoutAndPairedTests) {
    std::vector<CaseMetrics> a;
    std::vector<CaseMetrics> b;
    for (int i = 0; i < 6; ++i) {
        a.push_back(uniform_case("c" + std::to_string(i), 0.90 + 0.01 * i));
        b.push_back(uniform_case("c" + std::to_string(i), 0.80 + 0.012 * i));
    }
    const ReportTable t = build_report({{"unet", a}, {"r2unet", b}});
    ASSERT_EQ(t.models.size(), 2u);
    EXPECT_NEAR(t.cells[0][0][code(ClassId::sm)].mean, 0.925, 1e-12);
    ASSERT_EQ(t.tests.size(), 5u);
    for (const auto& pt : t.tests) {
        EXPECT_EQ(pt.n, 6);
        EXPECT_TRUE(pt.significant());
        EXPECT_GT(pt.result.t, 0.0);
    }
    const std::string text = format_report_text(t);
    std::istringstream lines(text);
    std::string header;
    std::getline(lines, header);
    EXPECT_EQ(header.rfind("Metric", 0), 0u);
    EXPECT_NE(text.find("0.925 ± 0.019"), std::string::npos) << text;
    std::ostringstream csv;
    write_report_csv(csv, t);
    EXPECT_EQ(csv.str().rfind("metric,model,VAT_mean,VAT_sd,VAT_n", 0), 0u);
}

TEST(Report, SkippedClassesReduceN) {
    CaseMetrics x = uniform_case("x", 1.0);
    x.dice[code(ClassId::imat)].reset();
    x.jaccard[code(ClassId::imat)].reset();
    const CaseMetrics y = uniform_case("y", 0.5);
    const ReportTable t = build_report({{"m", {x, y}}}, AbsentPolicy::skip);
    EXPECT_EQ(t.cells[0][0][code(ClassId::imat)].n, 1);
    EXPECT_EQ(t.cells[0][0][code(ClassId::sat)].n, 2);
    EXPECT_NE(format_report_text(t).find("skip"), std::string::npos);
}

TEST(Report, EvaluateRunCollectsProblems) {
    const LabelMask m(unit_geometry(3, 1, 1), 0);
    const LabelMask other(unit_geometry(4, 1, 1), 0);
    const std::map<std::string, LabelMask> pred = {{"a", m}, {"b", other}};
    const std::map<std::string, LabelMask> gt = {{"a", m}, {"b", m}, {"c", m}};
    try {
        (void)evaluate_run("m", pred, gt);
        FAIL();
    } catch (const DataError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("b"), std::string::npos);
        EXPECT_NE(what.find("c"), std::string::npos);
    }
}

}  // namespace
}  // namespace bcseg
