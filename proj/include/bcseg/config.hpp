#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "bcseg/augment.hpp"
#include "bcseg/inference.hpp"
#include "bcseg/metrics.hpp"
#include "bcseg/patch_sampler.hpp"
#include "bcseg/training.hpp"

namespace bcseg {

struct EvaluationConfig {
    int folds = 10;
    std::uint64_t seed = 1;
    AbsentPolicy absent_policy = AbsentPolicy::score_one;

    void validate() const;
};

struct PathsConfig {
    /// Cohort manifest; relative paths resolve against the config file.
    std::string cohort;
    std::string work_dir;
};

/// Whole-pipeline settings. Every field has a default; unknown keys are rejected.
struct PipelineConfig {
    SamplerConfig sampler;
    AugmentSpec augment;
    TrainConfig train;
    InferenceConfig inference;
    EvaluationConfig evaluation;
    PathsConfig paths;

    void validate() const;
};

/// Throws UsageError on unknown keys or invalid values, DataError on unreadable files.
[[nodiscard]] PipelineConfig load_config(const std::filesystem::path& path);
[[nodiscard]] PipelineConfig parse_config(const nlohmann::json& j);
[[nodiscard]] nlohmann::json config_to_json(const PipelineConfig& c);

/// FNV-1a of the canonical JSON dump, as 16 hex digits.
[[nodiscard]] std::string config_hash(const PipelineConfig& c);

}  // namespace bcseg
