#include "bcseg/pipeline.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"
#include "bcseg/inference.hpp"
#include "bcseg/volume_io.hpp"

namespace bcseg {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
}

template <typename Fn>
void write_with(const fs::path& path, Fn&& fn) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    fn(out);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
}

void say(const LogFn& log, const std::string& msg) {
    if (log) {
        log(msg);
    }
}

std::vector<Case> select(const std::vector<Case>& cases, const std::vector<std::size_t>& idx) {
    std::vector<Case> out;
    out.reserve(idx.size());
    for (auto i : idx) {
        out.push_back(cases[i]);
    }
    return out;
}

std::vector<ClassId> model_classes(const TrainConfig& t) {
    if (t.mode == TrainMode::joint) {
        return {};
    }
    if (t.target) {
        return {*t.target};
    }
    return {kTissues.begin(), kTissues.end()};
}

}  // namespace

std::string model_label(const PipelineConfig& cfg, const BackendSpec& backend) {
    std::string name = backend.is_builtin() ? "threshold" : cfg.train.model_name;
    if (cfg.train.mode == TrainMode::separate) {
        name += cfg.train.target ? "-" + std::string(class_name(*cfg.train.target)) : "-separate";
    }
    return name;
}

LabelMask TrainedModel::segment(const Volume& native, const InferenceConfig& cfg) {
    std::vector<BackendHandle*> handles;
    for (auto& b : backends) {
        handles.push_back(b.get());
    }
    if (classes.empty()) {
        return segment_case(native, handles, cfg, HelloMode{});
    }
    if (classes.size() == 1) {
        return segment_case(native, handles, cfg, HelloMode{classes[0]});
    }
    return segment_case_separate(native, handles, classes, cfg);
}

TrainedModel train_model(std::span<const Case> train_iso, std::span<const Case> val_iso, const PipelineConfig& cfg,
                         const BackendSpec& backend, const fs::path& out_dir, const LogFn& log) {
    fs::create_directories(out_dir);
    TrainedModel model;
    model.classes = model_classes(cfg.train);
    std::vector<std::optional<ClassId>> sessions;
    if (model.classes.empty()) {
        sessions.emplace_back(std::nullopt);
    } else {
        sessions.assign(model.classes.begin(), model.classes.end());
    }
    const auto side = static_cast<std::uint32_t>(cfg.sampler.patch_side());
    for (const auto& target : sessions) {
        TrainConfig tc = cfg.train;
        tc.target = target;
        const HelloMode mode = tc.hello_mode();
        auto handle = open_backend(backend, make_hello(mode, side));
        const std::string suffix = target ? "_" + std::string(class_name(*target)) : "";
        const fs::path ckpt_dir = out_dir / (target ? "checkpoints_" + std::string(class_name(*target)) : "checkpoints");
        fs::create_directories(ckpt_dir);
        TrainingInputs inputs{train_iso, val_iso, cfg.sampler, cfg.augment, ckpt_dir};
        auto result = run_training(inputs, tc, *handle);
        write_with(out_dir / ("epochs" + suffix + ".csv"),
                   [&](std::ostream& out) { write_epoch_log_csv(out, result.log); });
        say(log, "  trained " + (target ? std::string(class_name(*target)) : std::string("joint")) + " model: " +
                     std::to_string(result.log.size()) + " epochs, best validation Dice " +
                     std::to_string(result.schedule.best_val_metric));
        model.backends.push_back(std::move(handle));
        model.training.push_back(std::move(result));
    }
    return model;
}

CvResult run_cv(const Cohort& cohort, const PipelineConfig& cfg, const BackendSpec& backend, const fs::path& out_dir,
                const LogFn& log) {
    cfg.validate();
    fs::create_directories(out_dir);
    CvResult result;
    result.config_hash = config_hash(cfg);
    result.plan = make_folds(cohort.scan_types(), cfg.evaluation.folds, cfg.evaluation.seed);
    result.all.model = model_label(cfg, backend);

    say(log, "loading " + std::to_string(cohort.entries.size()) + " cases");
    const auto native = load_cases(cohort);
    std::vector<Case> iso;
    iso.reserve(native.size());
    for (const auto& c : native) {
        iso.push_back(to_isotropic(c));
    }

    nlohmann::json fold_records = nlohmann::json::array();
    for (const auto& a : result.plan.assignments) {
        say(log, "fold " + std::to_string(a.k) + ": " + std::to_string(a.train.size()) + " train, " +
                     std::to_string(a.validation.size()) + " validation, " + std::to_string(a.test.size()) + " test");
        const fs::path fold_dir = out_dir / ("fold_" + std::to_string(a.k));
        fs::create_directories(fold_dir / "pred");
        const auto train = select(iso, a.train);
        const auto val = select(iso, a.validation);
        auto model = train_model(train, val, cfg, backend, fold_dir, log);

        FoldOutcome outcome;
        outcome.k = a.k;
        outcome.metrics.model = result.all.model;
        for (const auto& t : model.training) {
            outcome.epochs_run.push_back(static_cast<int>(t.log.size()));
            if (t.checkpoint) {
                outcome.checkpoints.push_back(*t.checkpoint);
            }
        }
        for (auto i : a.test) {
            const Case& c = native[i];
            const LabelMask pred = model.segment(c.image, cfg.inference);
            save_mask(pred, fold_dir / "pred" / (c.id + ".json"));
            outcome.test_ids.push_back(c.id);
            outcome.metrics.cases.push_back(evaluate_case(c.id, pred, c.mask, cfg.evaluation.absent_policy));
        }
        model.backends.clear();  // shuts the sessions down

        write_with(fold_dir / "case_metrics.csv",
                   [&](std::ostream& out) { write_case_metrics_csv(out, outcome.metrics.cases); });
        write_text(fold_dir / "report.txt",
                   format_report_text(build_report({outcome.metrics}, cfg.evaluation.absent_policy)));
        result.all.cases.insert(result.all.cases.end(), outcome.metrics.cases.begin(), outcome.metrics.cases.end());
        fold_records.push_back({{"k", a.k},
                                {"test", outcome.test_ids},
                                {"epochs", outcome.epochs_run},
                                {"checkpoints", outcome.checkpoints}});
        result.folds.push_back(std::move(outcome));
    }

    // Deterministic order for the aggregate store.
    std::sort(result.all.cases.begin(), result.all.cases.end(),
              [](const CaseMetrics& x, const CaseMetrics& y) { return x.case_id < y.case_id; });
    result.table = build_report({result.all}, cfg.evaluation.absent_policy);
    write_with(out_dir / "case_metrics.csv",
               [&](std::ostream& out) { write_case_metrics_csv(out, result.all.cases); });
    write_text(out_dir / "report.txt", format_report_text(result.table));
    write_with(out_dir / "report.csv", [&](std::ostream& out) { write_report_csv(out, result.table); });

    fs::path cohort_path = out_dir / "cohort.json";
    save_cohort(cohort, cohort_path);
    const nlohmann::json manifest = {
        {"tool", "bcseg"},
        {"version", kToolVersion},
        {"protocol_version", protocol::kVersion},
        {"command", "cv"},
        {"config", config_to_json(cfg)},
        {"config_hash", result.config_hash},
        {"seed", cfg.evaluation.seed},
        {"backend", backend.command},
        {"cohort", "cohort.json"},
        {"folds", result.plan},
        {"fold_results", fold_records},
    };
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
    return result;
}

CvResult rerun_from_manifest(const fs::path& manifest_path, const fs::path& out_dir, const LogFn& log) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw DataError("manifest: cannot open " + manifest_path.string());
    }
    const auto m = nlohmann::json::parse(in, nullptr, false);
    if (m.is_discarded() || !m.is_object()) {
        throw DataError("manifest: " + manifest_path.string() + " is not a JSON object");
    }
    try {
        const PipelineConfig cfg = parse_config(m.at("config"));
        if (config_hash(cfg) != m.at("config_hash").get<std::string>()) {
            throw DataError("manifest: config hash does not match the stored config");
        }
        const BackendSpec backend{m.at("backend").get<std::vector<std::string>>()};
        const Cohort cohort = load_cohort(manifest_path.parent_path() / m.at("cohort").get<std::string>());
        const FoldPlan stored = m.at("folds").get<FoldPlan>();
        if (make_folds(cohort.scan_types(), cfg.evaluation.folds, cfg.evaluation.seed) != stored) {
            throw DataError("manifest: fold assignment does not reproduce from the stored seed");
        }
        return run_cv(cohort, cfg, backend, out_dir, log);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
}

std::vector<BootstrapRound> run_bootstrap(const PipelineConfig& cfg, const BackendSpec& backend,
                                          const BootstrapOptions& options, const LogFn& log) {
    cfg.validate();
    if (options.rounds < 1 || options.batch < 1) {
        throw UsageError("bootstrap: rounds and batch must be >= 1");
    }
    Cohort annotated = load_cohort(options.annotated);
    Cohort pending = load_cohort(options.pending);
    std::vector<BootstrapRound> rounds;
    for (int r = 0; r < options.rounds && !pending.entries.empty(); ++r) {
        const fs::path round_dir = options.out_dir / ("round_" + std::to_string(r));
        fs::create_directories(round_dir / "masks");
        auto cases = load_cases(annotated);
        if (cases.size() < 2) {
            throw DataError("bootstrap: need at least 2 annotated cases");
        }
        std::vector<Case> iso;
        for (const auto& c : cases) {
            iso.push_back(to_isotropic(c));
        }
        // Seeded hold-out of about a tenth of the annotated cases for validation.
        std::vector<std::size_t> order(iso.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        Rng rng(derive_seed(cfg.evaluation.seed, {hash_string("bootstrap"), static_cast<std::uint64_t>(r)}));
        rng.shuffle(std::span<std::size_t>(order));
        const std::size_t n_val = std::max<std::size_t>(1, iso.size() / 10);
        std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
        std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
        std::sort(val_idx.begin(), val_idx.end());
        std::sort(train_idx.begin(), train_idx.end());
        say(log, "round " + std::to_string(r) + ": training on " + std::to_string(train_idx.size()) + " cases");
        auto model = train_model(select(iso, train_idx), select(iso, val_idx), cfg, backend, round_dir, log);

        BootstrapRound info;
        info.round = r;
        for (const auto& e : annotated.entries) {
            info.annotated_ids.push_back(e.id);
        }
        Cohort next = annotated;
        Cohort rest;
        for (std::size_t i = 0; i < pending.entries.size(); ++i) {
            auto entry = pending.entries[i];
            if (i < static_cast<std::size_t>(options.batch)) {
                const Volume image = load_volume(entry.image);
                const fs::path mask_path = fs::absolute(round_dir / "masks" / (entry.id + ".json"));
                save_mask(model.segment(image, cfg.inference), mask_path);
                entry.mask = mask_path;
                info.proposed_ids.push_back(entry.id);
                next.entries.push_back(entry);
            } else {
                rest.entries.push_back(entry);
            }
        }
        model.backends.clear();
        info.next_cohort = round_dir / "cohort_next.json";
        info.next_pending = round_dir / "pending_next.json";
        save_cohort(next, info.next_cohort);
        save_cohort(rest, info.next_pending);
        say(log, "round " + std::to_string(r) + ": proposed " + std::to_string(info.proposed_ids.size()) +
                     " masks for correction in " + (round_dir / "masks").string());
        rounds.push_back(info);
        annotated = std::move(next);
        pending = std::move(rest);
    }
    return rounds;
}

}  // namespace bcseg
