#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bcseg/backend.hpp"
#include "bcseg/cohort.hpp"
#include "bcseg/config.hpp"
#include "bcseg/folds.hpp"
#include "bcseg/report.hpp"
#include "bcseg/training.hpp"

namespace bcseg {

inline constexpr const char* kToolVersion = "0.1.0";

using LogFn = std::function<void(const std::string&)>;

/// Trained session(s) for one split: a single joint or single-class model, or
/// one model per tissue when separate mode has no target class.
struct TrainedModel {
    std::vector<std::unique_ptr<BackendHandle>> backends;
    std::vector<ClassId> classes;  // empty for a joint model; the target(s) in separate mode
    std::vector<TrainingResult> training;

    /// Native-grid segmentation of one volume.
    [[nodiscard]] LabelMask segment(const Volume& native, const InferenceConfig& cfg);
};

/// Opens backend session(s) and runs training on isotropic cases.
/// Epoch logs are written to `out_dir` as epochs.csv or epochs_<class>.csv.
[[nodiscard]] TrainedModel train_model(std::span<const Case> train_iso, std::span<const Case> val_iso,
                                       const PipelineConfig& cfg, const BackendSpec& backend,
                                       const std::filesystem::path& out_dir, const LogFn& log = {});

struct FoldOutcome {
    int k = 0;
    std::vector<std::string> test_ids;
    std::vector<std::string> checkpoints;
    std::vector<int> epochs_run;
    ModelResults metrics;
};

struct CvResult {
    FoldPlan plan;
    std::vector<FoldOutcome> folds;
    ModelResults all;
    ReportTable table;
    std::string config_hash;
};

/// Runs every fold end to end and writes, under `out_dir`:
/// manifest.json, case_metrics.csv, report.txt, report.csv and per fold
/// fold_<k>/{epochs*.csv, case_metrics.csv, report.txt, pred/<id>.{json,raw}}.
[[nodiscard]] CvResult run_cv(const Cohort& cohort, const PipelineConfig& cfg, const BackendSpec& backend,
                              const std::filesystem::path& out_dir, const LogFn& log = {});

/// Re-runs the cross-validation recorded in a manifest into `out_dir`.
/// Throws DataError if the stored config hash or fold plan does not reproduce.
[[nodiscard]] CvResult rerun_from_manifest(const std::filesystem::path& manifest,
                                           const std::filesystem::path& out_dir, const LogFn& log = {});

[[nodiscard]] std::string model_label(const PipelineConfig& cfg, const BackendSpec& backend);

struct BootstrapOptions {
    std::filesystem::path annotated;  // cohort with masks
    std::filesystem::path pending;    // cohort without masks, in annotation order
    std::filesystem::path out_dir;
    int rounds = 1;
    int batch = 10;
};

struct BootstrapRound {
    int round = 0;
    std::vector<std::string> annotated_ids;
    std::vector<std::string> proposed_ids;
    std::filesystem::path next_cohort;
    std::filesystem::path next_pending;
};

/// Training-while-annotating loop. Each round trains on the annotated cohort,
/// segments the next `batch` pending scans, writes their masks for correction
/// and the grown cohort (round_<r>/cohort_next.json) plus the remaining
/// pending list. Later rounds accept the proposed masks unchanged.
[[nodiscard]] std::vector<BootstrapRound> run_bootstrap(const PipelineConfig& cfg, const BackendSpec& backend,
                                                        const BootstrapOptions& options, const LogFn& log = {});

}  // namespace bcseg
