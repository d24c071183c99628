#include "bcseg/cli.hpp"

#include <unistd.h>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bcseg/augment.hpp"
#include "bcseg/cohort.hpp"
#include "bcseg/config.hpp"
#include "bcseg/error.hpp"
#include "bcseg/inference.hpp"
#include "bcseg/patch_sampler.hpp"
#include "bcseg/phantom.hpp"
#include "bcseg/pipeline.hpp"
#include "bcseg/report.hpp"
#include "bcseg/resample.hpp"
#include "bcseg/threshold_backend.hpp"
#include "bcseg/transcript.hpp"
#include "bcseg/volume_io.hpp"

namespace bcseg {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config_path;
    std::string backend = BackendSpec::kBuiltinThreshold;
};

PipelineConfig load_or_default(const std::string& path) {
    return path.empty() ? PipelineConfig{} : load_config(path);
}

BackendSpec parse_backend(const std::string& text) {
    BackendSpec spec;
    std::istringstream in(text);
    for (std::string word; in >> word;) {
        spec.command.push_back(word);
    }
    if (spec.command.empty()) {
        throw UsageError("--backend: empty command");
    }
    return spec;
}

Index3 parse_index3(const std::string& text) {
    Index3 v{};
    char c1 = 0;
    char c2 = 0;
    std::istringstream in(text);
    if (!(in >> v[0] >> c1 >> v[1] >> c2 >> v[2]) || c1 != ',' || c2 != ',' || !in.eof()) {
        throw UsageError("expected x,y,z integers, got '" + text + "'");
    }
    return v;
}

Vec3 parse_vec3(const std::string& text) {
    Vec3 v{};
    char c1 = 0;
    char c2 = 0;
    std::istringstream in(text);
    if (!(in >> v[0] >> c1 >> v[1] >> c2 >> v[2]) || c1 != ',' || c2 != ',' || !in.eof()) {
        throw UsageError("expected x,y,z numbers, got '" + text + "'");
    }
    return v;
}

fs::path volume_path(const fs::path& dir, const std::string& stem, VolumeFormat format) {
    return dir / (stem + (format == VolumeFormat::nifti1 ? ".nii.gz" : ".json"));
}

VolumeFormat parse_format(const std::string& s) {
    if (s == "rvol") {
        return VolumeFormat::rvol;
    }
    if (s == "nifti") {
        return VolumeFormat::nifti1;
    }
    throw UsageError("--format must be rvol or nifti");
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
}

// --- subcommands -----------------------------------------------------------

struct PhantomArgs {
    std::string out;
    std::uint64_t seed = 1;
    int count = 1;
    std::string spec;
    std::string spacing;
    double noise = -1.0;
    double jitter = 0.0;
    std::string format = "rvol";
};

int cmd_phantom(const PhantomArgs& a, std::ostream& out) {
    if (a.count < 1) {
        throw UsageError("--count must be >= 1");
    }
    if (a.jitter < 0.0 || a.jitter >= 0.5) {
        throw UsageError("--jitter must lie in [0, 0.5)");
    }
    PhantomSpec base;
    if (!a.spec.empty()) {
        std::ifstream in(a.spec);
        if (!in) {
            throw DataError("cannot open " + a.spec);
        }
        try {
            base = nlohmann::json::parse(in).get<PhantomSpec>();
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(std::string("phantom spec: ") + e.what());
        }
    }
    if (!a.spacing.empty()) {
        base.spacing_mm = parse_vec3(a.spacing);
    }
    if (a.noise >= 0.0) {
        base.noise_sd_hu = a.noise;
    }
    const VolumeFormat format = parse_format(a.format);
    const fs::path dir(a.out);
    fs::create_directories(dir);
    Cohort cohort;
    static constexpr ScanType kTypes[] = {ScanType::whole_body, ScanType::chest, ScanType::whole_body,
                                          ScanType::abdomen};
    for (int i = 0; i < a.count; ++i) {
        PhantomSpec spec = base;
        char id[32];
        std::snprintf(id, sizeof id, "phantom_%03d", i);
        spec.seed = a.count == 1 ? a.seed : derive_seed(a.seed, {static_cast<std::uint64_t>(i)});
        if (a.jitter > 0.0) {
            Rng rng(derive_seed(spec.seed, {hash_string("jitter")}));
            for (auto& h : spec.body_half_axes_mm) {
                h *= rng.uniform(1.0 - a.jitter, 1.0 + a.jitter);
            }
        }
        spec.validate();
        const Phantom p = generate_phantom(spec);
        CohortEntry e;
        e.id = id;
        e.image = fs::absolute(volume_path(dir, e.id + "_image", format));
        e.mask = fs::absolute(volume_path(dir, e.id + "_mask", format));
        e.scan_type = kTypes[i % 4];
        save_volume(p.image, e.image, format);
        save_mask(p.mask, *e.mask, format);
        write_json(dir / (e.id + "_spec.json"), spec);
        cohort.entries.push_back(std::move(e));
        out << id << ": dims " << p.image.dims()[0] << "x" << p.image.dims()[1] << "x" << p.image.dims()[2] << "\n";
    }
    save_cohort(cohort, dir / "cohort.json");
    out << "wrote " << a.count << " phantom(s) and " << (dir / "cohort.json").string() << "\n";
    return 0;
}

int cmd_import(const std::string& in, const std::string& out_path, bool mask, std::ostream& out) {
    if (mask) {
        save_mask(load_mask(in), out_path, VolumeFormat::rvol);
    } else {
        save_volume(load_volume(in), out_path, VolumeFormat::rvol);
    }
    out << "imported " << in << " -> " << out_path << "\n";
    return 0;
}

int cmd_resample(const std::string& in, const std::string& out_path, bool mask, std::ostream& out) {
    if (mask) {
        const auto m = load_mask(in);
        save_mask(resample_mask(m, isotropic_geometry(m.geometry())), out_path);
    } else {
        save_volume(resample_to_isotropic(load_volume(in)), out_path);
    }
    out << "resampled " << in << " -> " << out_path << "\n";
    return 0;
}

struct SampleArgs {
    std::string cohort;
    std::string out;
    std::uint64_t epoch = 0;
    int limit = -1;
    bool no_augment = false;
    int workers = 1;
};

int cmd_sample(const Common& c, const SampleArgs& a, std::ostream& out, std::ostream& err) {
    const PipelineConfig cfg = load_or_default(c.config_path);
    const std::string cohort_path = a.cohort.empty() ? cfg.paths.cohort : a.cohort;
    if (cohort_path.empty()) {
        throw UsageError("sample: --cohort is required");
    }
    const auto native = load_cases(load_cohort(cohort_path));
    std::vector<Case> iso;
    for (const auto& cs : native) {
        iso.push_back(to_isotropic(cs));
    }
    const auto grids = summarize_cases(iso, cfg.sampler);
    StreamOptions opt;
    opt.workers = a.workers;
    if (!a.no_augment) {
        opt.augment = cfg.augment;
    }
    EpochStream stream(iso, grids, cfg.sampler, a.epoch, opt);
    const fs::path dir(a.out);
    fs::create_directories(dir);
    nlohmann::json records = nlohmann::json::array();
    int n = 0;
    while (auto r = stream.next()) {
        if (a.limit >= 0 && n >= a.limit) {
            break;
        }
        char stem[32];
        std::snprintf(stem, sizeof stem, "record_%05d", n);
        save_volume(r->image, dir / (std::string(stem) + "_image.json"));
        save_mask(r->mask, dir / (std::string(stem) + "_mask.json"));
        nlohmann::json rec = {{"index", n},
                              {"case", r->case_id},
                              {"class", class_name(r->class_of_interest)},
                              {"kind", r->kind == PatchKind::foreground ? "foreground" : "background"},
                              {"center", r->center},
                              {"round", r->round},
                              {"seed", r->task_seed},
                              {"relaxed_background", r->relaxed_background}};
        if (r->augmentation) {
            rec["augmentation"] = *r->augmentation;
        }
        records.push_back(std::move(rec));
        ++n;
    }
    for (const auto& w : stream.warnings()) {
        err << "warning: " << w << "\n";
    }
    write_json(dir / "manifest.json",
               {{"epoch", a.epoch}, {"sampler", cfg.sampler}, {"records", records}});
    out << "wrote " << n << " records to " << dir.string() << "\n";
    return 0;
}

struct PreviewArgs {
    std::string image;
    std::string mask;
    std::string center;
    std::uint64_t seed = 1;
    double probability = -1.0;
    std::string out;
};

int cmd_augment_preview(const Common& c, const PreviewArgs& a, std::ostream& out) {
    const PipelineConfig cfg = load_or_default(c.config_path);
    Case native;
    native.image = load_volume(a.image);
    native.mask = load_mask(a.mask);
    if (!(native.image.geometry() == native.mask.geometry())) {
        throw DataError("augment-preview: image and mask geometries differ");
    }
    const Case iso = to_isotropic(native);
    const auto patch = extract_patch(iso.image, iso.mask, parse_index3(a.center), cfg.sampler.patch_side());
    AugmentSpec spec = cfg.augment;
    if (a.probability >= 0.0) {
        spec = AugmentSpec::with_probability(a.probability);
    }
    spec.validate();
    Rng rng(a.seed);
    const AugmentSample sample = draw(spec, rng);
    const auto augmented = apply(sample, patch.image, patch.mask);
    const fs::path dir(a.out);
    fs::create_directories(dir);
    save_volume(patch.image, dir / "original_image.json");
    save_mask(patch.mask, dir / "original_mask.json");
    save_volume(augmented.image, dir / "augmented_image.json");
    save_mask(augmented.mask, dir / "augmented_mask.json");
    write_json(dir / "sample.json", sample);
    out << "applied " << sample.transform_count() << " transform(s); wrote " << dir.string() << "\n";
    return 0;
}

struct TrainArgs {
    std::string cohort;
    std::string out;
    int fold = 0;
    int max_epochs = 0;
};

int cmd_train(const Common& c, const TrainArgs& a, std::ostream& out, std::ostream& err) {
    PipelineConfig cfg = load_or_default(c.config_path);
    if (a.max_epochs > 0) {
        cfg.train.max_epochs = a.max_epochs;
    }
    cfg.validate();
    const std::string cohort_path = a.cohort.empty() ? cfg.paths.cohort : a.cohort;
    if (cohort_path.empty()) {
        throw UsageError("train: --cohort is required");
    }
    const Cohort cohort = load_cohort(cohort_path);
    const FoldPlan plan = make_folds(cohort.scan_types(), cfg.evaluation.folds, cfg.evaluation.seed);
    if (a.fold < 0 || a.fold >= plan.fold_count) {
        throw UsageError("--fold out of range");
    }
    const auto& fa = plan.assignments[static_cast<std::size_t>(a.fold)];
    const auto native = load_cases(cohort);
    std::vector<Case> train;
    std::vector<Case> val;
    for (auto i : fa.train) {
        train.push_back(to_isotropic(native[i]));
    }
    for (auto i : fa.validation) {
        val.push_back(to_isotropic(native[i]));
    }
    const BackendSpec backend = parse_backend(c.backend);
    const fs::path dir(a.out);
    auto model = train_model(train, val, cfg, backend, dir, [&](const std::string& m) { err << m << "\n"; });
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& t : model.training) {
        runs.push_back({{"epochs", t.log.size()},
                        {"best_epoch", t.best_epoch},
                        {"best_val_metric", t.schedule.best_val_metric},
                        {"final_lr", t.schedule.current_lr},
                        {"checkpoint", t.checkpoint ? nlohmann::json(*t.checkpoint) : nlohmann::json()}});
    }
    write_json(dir / "manifest.json", {{"tool", "bcseg"},
                                       {"version", kToolVersion},
                                       {"command", "train"},
                                       {"config", config_to_json(cfg)},
                                       {"config_hash", config_hash(cfg)},
                                       {"backend", backend.command},
                                       {"fold", a.fold},
                                       {"folds", plan},
                                       {"runs", runs}});
    out << "trained fold " << a.fold << "; logs in " << dir.string() << "\n";
    return 0;
}

struct InferArgs {
    std::string in;
    std::string out;
    std::string probs;
    std::string cls;
    std::int64_t stride = 0;
};

int cmd_infer(const Common& c, const InferArgs& a, std::ostream& out) {
    PipelineConfig cfg = load_or_default(c.config_path);
    if (a.stride > 0) {
        cfg.inference.stride = a.stride;
    }
    cfg.inference.validate();
    HelloMode mode;
    if (!a.cls.empty()) {
        mode.target = parse_class(a.cls);
    }
    const BackendSpec backend = parse_backend(c.backend);
    auto handle = open_backend(backend, make_hello(mode, static_cast<std::uint32_t>(cfg.inference.patch_side)));
    const Volume native = load_volume(a.in);
    if (!a.probs.empty()) {
        const Volume iso = resample_to_isotropic(native);
        const auto pv = predict_volume(iso, *handle, plan_tiles(iso.geometry(), cfg.inference.patch_side,
                                                                 cfg.inference.stride));
        for (std::uint32_t ch = 0; ch < pv.channels; ++ch) {
            Volume channel(pv.geometry, 0.0F);
            std::copy_n(pv.probs.begin() + static_cast<std::ptrdiff_t>(ch * pv.voxel_count()), pv.voxel_count(),
                        channel.data().begin());
            save_volume(channel, a.probs + "_c" + std::to_string(ch) + ".json");
        }
        const auto labels = channel_labels_to_classes(argmax_labels(pv), mode);
        save_mask(resample_mask(labels, native.geometry()), a.out);
    } else {
        save_mask(segment_case(native, *handle, cfg.inference, mode), a.out);
    }
    handle->shutdown();
    out << "wrote " << a.out << "\n";
    return 0;
}

fs::path find_prediction(const fs::path& dir, const std::string& id) {
    for (const char* ext : {".json", ".nii.gz", ".nii"}) {
        const fs::path p = dir / (id + ext);
        if (fs::exists(p)) {
            return p;
        }
    }
    return {};
}

struct EvaluateArgs {
    std::string cohort;
    std::string pred_dir;
    std::string model = "model";
    std::string out;
    std::string absent_policy = "score_one";
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
    const AbsentPolicy policy = parse_absent_policy(a.absent_policy);
    const Cohort cohort = load_cohort(a.cohort);
    std::map<std::string, LabelMask> preds;
    std::map<std::string, LabelMask> truths;
    for (const auto& e : cohort.entries) {
        if (!e.mask) {
            throw DataError("evaluate: case '" + e.id + "' has no ground truth mask");
        }
        truths.emplace(e.id, load_mask(*e.mask));
        const fs::path p = find_prediction(a.pred_dir, e.id);
        if (!p.empty()) {
            preds.emplace(e.id, load_mask(p));
        }
    }
    const ModelResults r = evaluate_run(a.model, preds, truths, policy);
    const ReportTable table = build_report({r}, policy);
    const std::string text = format_report_text(table);
    if (!a.out.empty()) {
        const fs::path dir(a.out);
        fs::create_directories(dir);
        std::ofstream m(dir / "case_metrics.csv");
        write_case_metrics_csv(m, r.cases);
        std::ofstream csv(dir / "report.csv");
        write_report_csv(csv, table);
        std::ofstream txt(dir / "report.txt");
        txt << text;
        if (!m || !csv || !txt) {
            throw DataError("evaluate: cannot write to " + dir.string());
        }
    }
    out << text;
    return 0;
}

struct CvArgs {
    std::string cohort;
    std::string out;
    std::string manifest;
    int folds = 0;
    int max_epochs = 0;
};

int cmd_cv(const Common& c, const CvArgs& a, std::ostream& out, std::ostream& err) {
    auto log = [&](const std::string& m) { err << m << "\n"; };
    if (a.out.empty()) {
        throw UsageError("cv: --out is required");
    }
    CvResult r;
    if (!a.manifest.empty()) {
        r = rerun_from_manifest(a.manifest, a.out, log);
    } else {
        PipelineConfig cfg = load_or_default(c.config_path);
        if (a.folds > 0) {
            cfg.evaluation.folds = a.folds;
        }
        if (a.max_epochs > 0) {
            cfg.train.max_epochs = a.max_epochs;
        }
        cfg.validate();
        const std::string cohort_path = a.cohort.empty() ? cfg.paths.cohort : a.cohort;
        if (cohort_path.empty()) {
            throw UsageError("cv: --cohort is required");
        }
        r = run_cv(load_cohort(cohort_path), cfg, parse_backend(c.backend), a.out, log);
    }
    out << format_report_text(r.table);
    out << "config hash " << r.config_hash << "; results in " << a.out << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_dir, const std::string& policy_text,
               std::ostream& out) {
    const AbsentPolicy policy = parse_absent_policy(policy_text);
    std::vector<ModelResults> runs;
    for (const auto& item : inputs) {
        const auto eq = item.find('=');
        ModelResults r;
        fs::path path;
        if (eq == std::string::npos) {
            path = item;
            r.model = fs::path(item).parent_path().filename().string();
            if (r.model.empty()) {
                r.model = "model" + std::to_string(runs.size());
            }
        } else {
            r.model = item.substr(0, eq);
            path = item.substr(eq + 1);
        }
        std::ifstream in(path);
        if (!in) {
            throw DataError("report: cannot open " + path.string());
        }
        r.cases = read_case_metrics_csv(in);
        runs.push_back(std::move(r));
    }
    const ReportTable table = build_report(runs, policy);
    const std::string text = format_report_text(table);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream txt(fs::path(out_dir) / "report.txt");
        txt << text;
        std::ofstream csv(fs::path(out_dir) / "report.csv");
        write_report_csv(csv, table);
    }
    out << text;
    return 0;
}

int cmd_bootstrap(const Common& c, const BootstrapOptions& o, std::ostream& out, std::ostream& err) {
    const PipelineConfig cfg = load_or_default(c.config_path);
    const auto rounds = run_bootstrap(cfg, parse_backend(c.backend), o, [&](const std::string& m) { err << m << "\n"; });
    for (const auto& r : rounds) {
        out << "round " << r.round << ": " << r.annotated_ids.size() << " annotated, " << r.proposed_ids.size()
            << " proposed -> " << r.next_cohort.string() << "\n";
    }
    return 0;
}

int cmd_conformance(const Common& c, const std::string& path, bool record, bool shape, std::ostream& out,
                    std::ostream& err) {
    if (record) {
        ThresholdBackend server;
        const auto requests = transcript::reference_requests();
        const auto entries = transcript::record(server, requests);
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << transcript::format(entries, "Built-in threshold backend reference conversation.\n"
                                         "Hello, InferRequest (air), InferRequest (700 HU), TrainBatch (B=1),\n"
                                         "SetLearningRate, Shutdown.");
        if (!f) {
            throw DataError("cannot write " + path);
        }
        out << "recorded " << entries.size() << " frames to " << path << "\n";
        return 0;
    }
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw DataError("cannot open " + path);
    }
    std::stringstream text;
    text << f.rdbuf();
    const auto entries = transcript::parse(text.str());
    const BackendSpec backend = parse_backend(c.backend);
    std::unique_ptr<Transport> transport;
    if (backend.is_builtin()) {
        transport = std::make_unique<LoopbackTransport>(std::make_unique<ThresholdBackend>());
    } else {
        transport = PipeTransport::spawn(backend.command);
    }
    const auto problems =
        transcript::replay(entries, *transport, shape ? transcript::Match::shape : transcript::Match::exact);
    transport->close();
    for (const auto& p : problems) {
        err << p << "\n";
    }
    if (!problems.empty()) {
        throw BackendError("conformance: " + std::to_string(problems.size()) + " mismatch(es)");
    }
    out << "conformant: " << entries.size() << " frames\n";
    return 0;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Body-composition CT segmentation pipeline", "bcseg"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub, bool backend) {
        sub->add_option("--config", common.config_path, "Pipeline config (JSON)");
        if (backend) {
            sub->add_option("--backend", common.backend,
                            "Backend command line, or 'builtin-threshold' for the in-process backend");
        }
    };

    PhantomArgs phantom;
    auto* s_phantom = app.add_subcommand("phantom", "Generate synthetic phantom scans and a cohort manifest");
    s_phantom->add_option("--out", phantom.out, "Output directory")->required();
    s_phantom->add_option("--seed", phantom.seed, "Master seed");
    s_phantom->add_option("--count", phantom.count, "Number of phantoms");
    s_phantom->add_option("--spec", phantom.spec, "Phantom spec JSON");
    s_phantom->add_option("--spacing", phantom.spacing, "Native spacing x,y,z in mm");
    s_phantom->add_option("--noise", phantom.noise, "Noise SD in HU");
    s_phantom->add_option("--jitter", phantom.jitter, "Relative random variation of the body size");
    s_phantom->add_option("--format", phantom.format, "rvol or nifti");

    std::string io_in;
    std::string io_out;
    bool io_mask = false;
    auto* s_import = app.add_subcommand("import", "Convert a NIfTI volume to rvol");
    s_import->add_option("--in", io_in)->required();
    s_import->add_option("--out", io_out)->required();
    s_import->add_flag("--mask", io_mask, "Input is a label mask");
    auto* s_resample = app.add_subcommand("resample", "Resample a volume or mask to 1 mm isotropic");
    s_resample->add_option("--in", io_in)->required();
    s_resample->add_option("--out", io_out)->required();
    s_resample->add_flag("--mask", io_mask, "Input is a label mask (nearest neighbour)");

    SampleArgs sample;
    auto* s_sample = app.add_subcommand("sample", "Dump one epoch of patch records");
    add_common(s_sample, false);
    s_sample->add_option("--cohort", sample.cohort);
    s_sample->add_option("--out", sample.out)->required();
    s_sample->add_option("--epoch", sample.epoch);
    s_sample->add_option("--limit", sample.limit, "Stop after this many records");
    s_sample->add_flag("--no-augment", sample.no_augment);
    s_sample->add_option("--workers", sample.workers);

    PreviewArgs preview;
    auto* s_preview = app.add_subcommand("augment-preview", "Extract one patch and apply a drawn augmentation");
    add_common(s_preview, false);
    s_preview->add_option("--image", preview.image)->required();
    s_preview->add_option("--mask", preview.mask)->required();
    s_preview->add_option("--center", preview.center, "Center voxel x,y,z on the 1 mm grid")->required();
    s_preview->add_option("--seed", preview.seed);
    s_preview->add_option("--probability", preview.probability, "Use this probability for every transform");
    s_preview->add_option("--out", preview.out)->required();

    TrainArgs train;
    auto* s_train = app.add_subcommand("train", "Train on one cross-validation fold");
    add_common(s_train, true);
    s_train->add_option("--cohort", train.cohort);
    s_train->add_option("--out", train.out)->required();
    s_train->add_option("--fold", train.fold);
    s_train->add_option("--max-epochs", train.max_epochs);

    InferArgs infer;
    auto* s_infer = app.add_subcommand("infer", "Segment one volume");
    add_common(s_infer, true);
    s_infer->add_option("--in", infer.in)->required();
    s_infer->add_option("--out", infer.out)->required();
    s_infer->add_option("--probs", infer.probs, "Write per-channel probability volumes with this prefix");
    s_infer->add_option("--class", infer.cls, "Separate-mode target class");
    s_infer->add_option("--stride", infer.stride);

    EvaluateArgs evaluate;
    auto* s_eval = app.add_subcommand("evaluate", "Score predicted masks against a cohort's ground truth");
    s_eval->add_option("--cohort", evaluate.cohort)->required();
    s_eval->add_option("--pred-dir", evaluate.pred_dir, "Directory holding <case id>.json|.nii.gz masks")
        ->required();
    s_eval->add_option("--model", evaluate.model);
    s_eval->add_option("--out", evaluate.out);
    s_eval->add_option("--absent-policy", evaluate.absent_policy, "score_one or skip");

    CvArgs cv;
    auto* s_cv = app.add_subcommand("cv", "Cross-validate end to end over all folds");
    add_common(s_cv, true);
    s_cv->add_option("--cohort", cv.cohort);
    s_cv->add_option("--out", cv.out)->required();
    s_cv->add_option("--manifest", cv.manifest, "Re-run from a previous run's manifest.json");
    s_cv->add_option("--folds", cv.folds);
    s_cv->add_option("--max-epochs", cv.max_epochs);

    std::vector<std::string> report_inputs;
    std::string report_out;
    std::string report_policy = "score_one";
    auto* s_report = app.add_subcommand("report", "Build a comparison table from case-metrics CSV files");
    s_report->add_option("--metrics", report_inputs, "name=path.csv, repeatable")->required();
    s_report->add_option("--out", report_out);
    s_report->add_option("--absent-policy", report_policy);

    BootstrapOptions boot;
    std::string boot_annotated;
    std::string boot_pending;
    std::string boot_out;
    auto* s_boot = app.add_subcommand("bootstrap", "Train, then propose masks for the next batch of scans");
    add_common(s_boot, true);
    s_boot->add_option("--annotated", boot_annotated)->required();
    s_boot->add_option("--pending", boot_pending)->required();
    s_boot->add_option("--out", boot_out)->required();
    s_boot->add_option("--rounds", boot.rounds);
    s_boot->add_option("--batch", boot.batch);

    auto* s_serve = app.add_subcommand("backend-threshold", "Serve the threshold backend on stdin/stdout");

    std::string transcript_path;
    bool transcript_record = false;
    bool transcript_shape = false;
    auto* s_conf = app.add_subcommand("conformance", "Check a backend against a recorded transcript");
    add_common(s_conf, true);
    s_conf->add_option("--transcript", transcript_path)->required();
    s_conf->add_flag("--record", transcript_record, "Record the built-in backend's transcript instead");
    s_conf->add_flag("--shape", transcript_shape, "Compare message types and shapes only");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    if (s_phantom->parsed()) {
        return cmd_phantom(phantom, out);
    }
    if (s_import->parsed()) {
        return cmd_import(io_in, io_out, io_mask, out);
    }
    if (s_resample->parsed()) {
        return cmd_resample(io_in, io_out, io_mask, out);
    }
    if (s_sample->parsed()) {
        return cmd_sample(common, sample, out, err);
    }
    if (s_preview->parsed()) {
        return cmd_augment_preview(common, preview, out);
    }
    if (s_train->parsed()) {
        return cmd_train(common, train, out, err);
    }
    if (s_infer->parsed()) {
        return cmd_infer(common, infer, out);
    }
    if (s_eval->parsed()) {
        return cmd_evaluate(evaluate, out);
    }
    if (s_cv->parsed()) {
        return cmd_cv(common, cv, out, err);
    }
    if (s_report->parsed()) {
        return cmd_report(report_inputs, report_out, report_policy, out);
    }
    if (s_boot->parsed()) {
        boot.annotated = boot_annotated;
        boot.pending = boot_pending;
        boot.out_dir = boot_out;
        return cmd_bootstrap(common, boot, out, err);
    }
    if (s_serve->parsed()) {
        ThresholdBackend server;
        return serve_stream(server, STDIN_FILENO, STDOUT_FILENO);
    }
    if (s_conf->parsed()) {
        return cmd_conformance(common, transcript_path, transcript_record, transcript_shape, out, err);
    }
    return 1;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        return run(args, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case ErrorKind::usage: return 1;
            case ErrorKind::data: return 2;
            case ErrorKind::backend: return 3;
        }
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

int cli_dispatch(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace bcseg
