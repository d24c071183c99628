#include "bcseg/config.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"
#include "bcseg/rng.hpp"

namespace bcseg {

void EvaluationConfig::validate() const {
    if (folds < 3) {
        throw UsageError("evaluation: folds must be >= 3");
    }
}

void PipelineConfig::validate() const {
    sampler.validate();
    augment.validate();
    train.validate();
    inference.validate();
    evaluation.validate();
    if (inference.patch_side != sampler.patch_side()) {
        throw UsageError("config: inference.patch_side must equal the sampler's patch side (" +
                         std::to_string(sampler.patch_side()) + ")");
    }
}

nlohmann::json config_to_json(const PipelineConfig& c) {
    return nlohmann::json{
        {"sampler", c.sampler},
        {"augment", c.augment},
        {"train", c.train},
        {"inference", c.inference},
        {"evaluation",
         {{"folds", c.evaluation.folds},
          {"seed", c.evaluation.seed},
          {"absent_policy", absent_policy_name(c.evaluation.absent_policy)}}},
        {"paths", {{"cohort", c.paths.cohort}, {"work_dir", c.paths.work_dir}}},
    };
}

PipelineConfig parse_config(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw UsageError("config: top level must be an object");
    }
    PipelineConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "sampler") {
                c.sampler = value.get<SamplerConfig>();
            } else if (key == "augment") {
                c.augment = value.get<AugmentSpec>();
            } else if (key == "train") {
                c.train = value.get<TrainConfig>();
            } else if (key == "inference") {
                c.inference = value.get<InferenceConfig>();
            } else if (key == "evaluation") {
                for (const auto& [k, v] : value.items()) {
                    if (k == "folds") {
                        c.evaluation.folds = v.get<int>();
                    } else if (k == "seed") {
                        c.evaluation.seed = v.get<std::uint64_t>();
                    } else if (k == "absent_policy") {
                        c.evaluation.absent_policy = parse_absent_policy(v.get<std::string>());
                    } else {
                        throw UsageError("evaluation: unknown key '" + k + "'");
                    }
                }
            } else if (key == "paths") {
                for (const auto& [k, v] : value.items()) {
                    if (k == "cohort") {
                        c.paths.cohort = v.get<std::string>();
                    } else if (k == "work_dir") {
                        c.paths.work_dir = v.get<std::string>();
                    } else {
                        throw UsageError("paths: unknown key '" + k + "'");
                    }
                }
            } else {
                throw UsageError("config: unknown section '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("config: cannot open " + path.string());
    }
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        throw UsageError("config: " + path.string() + " is not valid JSON");
    }
    auto c = parse_config(j);
    if (!c.paths.cohort.empty() && std::filesystem::path(c.paths.cohort).is_relative()) {
        c.paths.cohort = (path.parent_path() / c.paths.cohort).lexically_normal().string();
    }
    return c;
}

std::string config_hash(const PipelineConfig& c) {
    auto j = config_to_json(c);
    // Paths do not change results.
    j.erase("paths");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_string(j.dump())));
    return buf;
}

}  // namespace bcseg
