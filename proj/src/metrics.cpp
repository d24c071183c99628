#include "bcseg/metrics.hpp"

#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "bcseg/error.hpp"

namespace bcseg {

Overlap class_overlap(const LabelMask& pred, const LabelMask& truth, ClassId c) {
    if (!(pred.geometry() == truth.geometry())) {
        throw DataError("metrics: prediction and ground truth geometries differ");
    }
    const auto k = code(c);
    Overlap o;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool a = pred[i] == k;
        const bool b = truth[i] == k;
        o.pred += a;
        o.truth += b;
        o.intersection += a && b;
    }
    return o;
}

double dice(const Overlap& o) noexcept {
    const auto denom = o.pred + o.truth;
    return denom == 0 ? 1.0 : 2.0 * static_cast<double>(o.intersection) / static_cast<double>(denom);
}

double jaccard(const Overlap& o) noexcept {
    const auto uni = o.pred + o.truth - o.intersection;
    return uni == 0 ? 1.0 : static_cast<double>(o.intersection) / static_cast<double>(uni);
}

double dice(const LabelMask& pred, const LabelMask& truth, ClassId c) {
    return dice(class_overlap(pred, truth, c));
}

double jaccard(const LabelMask& pred, const LabelMask& truth, ClassId c) {
    return jaccard(class_overlap(pred, truth, c));
}

std::string_view absent_policy_name(AbsentPolicy p) noexcept {
    return p == AbsentPolicy::score_one ? "score_one" : "skip";
}

AbsentPolicy parse_absent_policy(std::string_view text) {
    if (text == "score_one") {
        return AbsentPolicy::score_one;
    }
    if (text == "skip") {
        return AbsentPolicy::skip;
    }
    throw UsageError("absent-class policy must be score_one or skip");
}

CaseMetrics evaluate_case(const std::string& case_id, const LabelMask& pred, const LabelMask& truth,
                          AbsentPolicy policy) {
    if (!(pred.geometry() == truth.geometry())) {
        throw DataError("evaluate: " + case_id + ": prediction and ground truth geometries differ");
    }
    // One pass for all classes.
    std::array<Overlap, kClassCount> o{};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto a = pred[i];
        const auto b = truth[i];
        if (a < kClassCount) {
            ++o[a].pred;
        }
        if (b < kClassCount) {
            ++o[b].truth;
        }
        if (a == b && a < kClassCount) {
            ++o[a].intersection;
        }
    }
    CaseMetrics m;
    m.case_id = case_id;
    for (const ClassId c : kTissues) {
        const auto& ov = o[code(c)];
        if (policy == AbsentPolicy::skip && ov.pred == 0 && ov.truth == 0) {
            continue;
        }
        m.dice[code(c)] = dice(ov);
        m.jaccard[code(c)] = jaccard(ov);
    }
    return m;
}

void write_case_metrics_csv(std::ostream& out, const std::vector<CaseMetrics>& metrics) {
    out << "case_id,class,dice,jaccard\n";
    out.precision(17);
    for (const auto& m : metrics) {
        for (const ClassId c : kTissues) {
            out << m.case_id << ',' << class_name(c) << ',';
            if (m.dice[code(c)]) {
                out << *m.dice[code(c)];
            }
            out << ',';
            if (m.jaccard[code(c)]) {
                out << *m.jaccard[code(c)];
            }
            out << '\n';
        }
    }
}

namespace {

std::optional<double> parse_cell(const std::string& cell, int line_no) {
    if (cell.empty()) {
        return std::nullopt;
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw DataError("case metrics: line " + std::to_string(line_no) + ": bad number '" + cell + "'");
    }
    return v;
}

}  // namespace

std::vector<CaseMetrics> read_case_metrics_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("case_id,class,dice,jaccard", 0) != 0) {
        throw DataError("case metrics: missing header 'case_id,class,dice,jaccard'");
    }
    std::vector<CaseMetrics> out;
    std::map<std::string, std::size_t> index;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) {
            cells.push_back(cell);
        }
        if (line.back() == ',') {
            cells.emplace_back();
        }
        if (cells.size() != 4) {
            throw DataError("case metrics: line " + std::to_string(line_no) + ": expected 4 columns");
        }
        ClassId c;
        try {
            c = parse_class(cells[1]);
        } catch (const UsageError&) {
            throw DataError("case metrics: line " + std::to_string(line_no) + ": unknown class '" + cells[1] + "'");
        }
        auto [it, inserted] = index.emplace(cells[0], out.size());
        if (inserted) {
            out.push_back(CaseMetrics{cells[0], {}, {}, true});
        }
        auto& m = out[it->second];
        m.dice[code(c)] = parse_cell(cells[2], line_no);
        m.jaccard[code(c)] = parse_cell(cells[3], line_no);
    }
    return out;
}

}  // namespace bcseg
