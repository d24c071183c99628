#include "bcseg/report.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "bcseg/error.hpp"

namespace bcseg {

std::string_view metric_name(Metric m) noexcept {
    return m == Metric::dice ? "Dice" : "Jaccard";
}

CellStats cell_stats(const std::vector<double>& values) {
    CellStats s;
    s.n = static_cast<int>(values.size());
    if (values.empty()) {
        return s;
    }
    for (double v : values) {
        s.mean += v;
    }
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) {
            ss += (v - s.mean) * (v - s.mean);
        }
        s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

namespace {

std::vector<double> column(const ModelResults& r, Metric m, ClassId c) {
    std::vector<double> out;
    for (const auto& cm : r.cases) {
        const auto& v = m == Metric::dice ? cm.dice[code(c)] : cm.jaccard[code(c)];
        if (v) {
            out.push_back(*v);
        }
    }
    return out;
}

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string cell_text(const CellStats& s) {
    return s.n == 0 ? "n/a" : fixed3(s.mean) + " ± " + fixed3(s.sd);
}

std::string p_text(const TTestResult& r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", r.p);
    return std::string(buf) + (r.degenerate ? " (degenerate)" : "");
}

}  // namespace

ReportTable build_report(const std::vector<ModelResults>& runs, AbsentPolicy policy) {
    ReportTable t;
    t.absent_policy = policy;
    for (const auto& r : runs) {
        t.models.push_back(r.model);
        auto& row = t.cells.emplace_back();
        for (const Metric m : {Metric::dice, Metric::jaccard}) {
            for (const ClassId c : kTissues) {
                row[static_cast<int>(m)][code(c)] = cell_stats(column(r, m, c));
            }
        }
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
        for (std::size_t j = i + 1; j < runs.size(); ++j) {
            std::map<std::string, const CaseMetrics*> other;
            for (const auto& cm : runs[j].cases) {
                other[cm.case_id] = &cm;
            }
            for (const ClassId c : kTissues) {
                std::vector<double> a;
                std::vector<double> b;
                for (const auto& cm : runs[i].cases) {
                    auto it = other.find(cm.case_id);
                    if (it != other.end() && cm.dice[code(c)] && it->second->dice[code(c)]) {
                        a.push_back(*cm.dice[code(c)]);
                        b.push_back(*it->second->dice[code(c)]);
                    }
                }
                if (a.size() < 2) {
                    continue;
                }
                PairwiseTest pt;
                pt.model_a = runs[i].model;
                pt.model_b = runs[j].model;
                pt.cls = c;
                pt.n = static_cast<int>(a.size());
                pt.result = paired_t_test(a, b);
                t.tests.push_back(pt);
            }
        }
    }
    return t;
}

std::string format_report_text(const ReportTable& table) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Metric", "Model"};
    for (const ClassId c : kTissues) {
        header.emplace_back(class_name(c));
    }
    rows.push_back(header);
    for (const Metric m : {Metric::dice, Metric::jaccard}) {
        for (std::size_t i = 0; i < table.models.size(); ++i) {
            std::vector<std::string> row{std::string(metric_name(m)), table.models[i]};
            for (const ClassId c : kTissues) {
                row.push_back(cell_text(table.cells[i][static_cast<int>(m)][code(c)]));
            }
            rows.push_back(row);
        }
    }
    // Column widths in code points; "±" is two bytes in UTF-8.
    auto width = [](const std::string& s) {
        std::size_t w = 0;
        for (unsigned char ch : s) {
            w += (ch & 0xC0) != 0x80;
        }
        return w;
    };
    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& row : rows) {
        for (std::size_t k = 0; k < row.size(); ++k) {
            widths[k] = std::max(widths[k], width(row[k]));
        }
    }
    std::ostringstream out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t k = 0; k < rows[r].size(); ++k) {
            out << rows[r][k];
            if (k + 1 < rows[r].size()) {
                out << std::string(widths[k] - width(rows[r][k]) + 2, ' ');
            }
        }
        out << '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (auto w : widths) {
                total += w + 2;
            }
            out << std::string(total - 2, '-') << '\n';
        }
    }
    out << "Absent classes: " << (table.absent_policy == AbsentPolicy::score_one ? "scored 1.0 when absent from "
                                                                                   "prediction and truth"
                                                                                 : "skipped")
        << '\n';
    if (!table.tests.empty()) {
        out << "\nPaired t-tests on per-case Dice (two-tailed, * p < 0.05)\n";
        for (const auto& pt : table.tests) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "t=%.4f df=%d", pt.result.t, pt.result.df);
            out << pt.model_a << " vs " << pt.model_b << "  " << class_name(pt.cls) << "  " << buf
                << "  p=" << p_text(pt.result) << (pt.significant() ? " *" : "") << '\n';
        }
    }
    return out.str();
}

void write_report_csv(std::ostream& out, const ReportTable& table) {
    out << "metric,model";
    for (const ClassId c : kTissues) {
        out << ',' << class_name(c) << "_mean," << class_name(c) << "_sd," << class_name(c) << "_n";
    }
    out << '\n';
    out.precision(17);
    for (const Metric m : {Metric::dice, Metric::jaccard}) {
        for (std::size_t i = 0; i < table.models.size(); ++i) {
            out << metric_name(m) << ',' << table.models[i];
            for (const ClassId c : kTissues) {
                const auto& s = table.cells[i][static_cast<int>(m)][code(c)];
                out << ',' << s.mean << ',' << s.sd << ',' << s.n;
            }
            out << '\n';
        }
    }
    if (!table.tests.empty()) {
        out << "\nmodel_a,model_b,class,n,t,df,p,significant\n";
        for (const auto& pt : table.tests) {
            out << pt.model_a << ',' << pt.model_b << ',' << class_name(pt.cls) << ',' << pt.n << ',' << pt.result.t
                << ',' << pt.result.df << ',' << pt.result.p << ',' << (pt.significant() ? 1 : 0) << '\n';
        }
    }
}

ModelResults evaluate_run(const std::string& model, const std::map<std::string, LabelMask>& predictions,
                          const std::map<std::string, LabelMask>& truths, AbsentPolicy policy) {
    std::vector<std::string> problems;
    for (const auto& [id, mask] : predictions) {
        if (!truths.contains(id)) {
            problems.push_back(id + ": prediction without ground truth");
        }
    }
    ModelResults r;
    r.model = model;
    for (const auto& [id, truth] : truths) {
        auto it = predictions.find(id);
        if (it == predictions.end()) {
            problems.push_back(id + ": ground truth without prediction");
            continue;
        }
        if (!(it->second.geometry() == truth.geometry())) {
            problems.push_back(id + ": geometry mismatch between prediction and ground truth");
            continue;
        }
        r.cases.push_back(evaluate_case(id, it->second, truth, policy));
    }
    if (!problems.empty()) {
        std::string msg = "evaluate: " + std::to_string(problems.size()) + " problem(s)";
        for (const auto& p : problems) {
            msg += "\n  " + p;
        }
        throw DataError(msg);
    }
    return r;
}

}  // namespace bcseg
