#include "bcseg/cohort.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"
#include "bcseg/resample.hpp"
#include "bcseg/volume_io.hpp"

namespace bcseg {

namespace fs = std::filesystem;

std::string_view scan_type_name(ScanType t) noexcept {
    switch (t) {
        case ScanType::whole_body: return "whole_body";
        case ScanType::chest: return "chest";
        case ScanType::abdomen: return "abdomen";
    }
    return "?";
}

ScanType parse_scan_type(std::string_view text) {
    if (text == "whole_body" || text == "whole-body") {
        return ScanType::whole_body;
    }
    if (text == "chest") {
        return ScanType::chest;
    }
    if (text == "abdomen") {
        return ScanType::abdomen;
    }
    throw DataError("unknown scan type '" + std::string(text) + "'");
}

std::vector<ScanType> Cohort::scan_types() const {
    std::vector<ScanType> out;
    for (const auto& e : entries) {
        out.push_back(e.scan_type);
    }
    return out;
}

Cohort load_cohort(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cohort: cannot open " + path.string());
    }
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("cases") || !j["cases"].is_array()) {
        throw DataError("cohort: " + path.string() + " must be an object with a 'cases' array");
    }
    const fs::path base = fs::absolute(path).parent_path();
    Cohort c;
    std::set<std::string> seen;
    try {
        for (const auto& item : j["cases"]) {
            for (const auto& [key, value] : item.items()) {
                if (key != "id" && key != "image" && key != "mask" && key != "scan_type") {
                    throw DataError("cohort: unknown key '" + key + "'");
                }
            }
            CohortEntry e;
            e.id = item.at("id").get<std::string>();
            if (e.id.empty() || !seen.insert(e.id).second) {
                throw DataError("cohort: empty or duplicate case id '" + e.id + "'");
            }
            e.image = (base / item.at("image").get<std::string>()).lexically_normal();
            if (item.contains("mask") && !item["mask"].is_null()) {
                e.mask = (base / item["mask"].get<std::string>()).lexically_normal();
            }
            e.scan_type = parse_scan_type(item.value("scan_type", std::string("whole_body")));
            c.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("cohort: ") + e.what());
    }
    return c;
}

void save_cohort(const Cohort& cohort, const fs::path& path) {
    const fs::path base = fs::absolute(path).parent_path();
    nlohmann::json cases = nlohmann::json::array();
    for (const auto& e : cohort.entries) {
        nlohmann::json item = {{"id", e.id},
                               {"image", fs::absolute(e.image).lexically_relative(base).generic_string()},
                               {"scan_type", scan_type_name(e.scan_type)}};
        if (e.mask) {
            item["mask"] = fs::absolute(*e.mask).lexically_relative(base).generic_string();
        }
        cases.push_back(std::move(item));
    }
    if (!base.empty()) {
        fs::create_directories(base);
    }
    std::ofstream out(path);
    out << nlohmann::json{{"cases", cases}}.dump(2) << '\n';
    if (!out) {
        throw DataError("cohort: cannot write " + path.string());
    }
}

Case load_case(const CohortEntry& entry) {
    if (!entry.mask) {
        throw DataError("cohort: case '" + entry.id + "' has no mask");
    }
    Case c;
    c.id = entry.id;
    c.scan_type = entry.scan_type;
    c.image = load_volume(entry.image);
    c.mask = load_mask(*entry.mask);
    if (!(c.image.geometry() == c.mask.geometry())) {
        throw DataError("cohort: case '" + entry.id + "': image and mask geometries differ");
    }
    return c;
}

std::vector<Case> load_cases(const Cohort& cohort) {
    std::vector<Case> out;
    out.reserve(cohort.entries.size());
    for (const auto& e : cohort.entries) {
        out.push_back(load_case(e));
    }
    return out;
}

Case to_isotropic(const Case& native) {
    Case iso;
    iso.id = native.id;
    iso.scan_type = native.scan_type;
    iso.image = resample_to_isotropic(native.image);
    iso.mask = resample_mask(native.mask, iso.image.geometry());
    return iso;
}

}  // namespace bcseg
