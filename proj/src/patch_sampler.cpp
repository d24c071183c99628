#include "bcseg/patch_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"

namespace bcseg {

void SamplerConfig::validate() const {
    if (!(cell_mm > 0.0) || !(patch_mm > 0.0)) {
        throw UsageError("sampler: cell_mm and patch_mm must be positive");
    }
    if (!(background_fg_fraction_max >= 0.0 && background_fg_fraction_max <= 1.0)) {
        throw UsageError("sampler: background_fg_fraction_max must lie in [0,1]");
    }
    if (pairs_per_class_per_case < 1) {
        throw UsageError("sampler: pairs_per_class_per_case must be >= 1");
    }
}

std::int64_t SamplerConfig::cell_side() const {
    return std::max<std::int64_t>(1, std::llround(cell_mm));
}

std::int64_t SamplerConfig::patch_side() const {
    return std::max<std::int64_t>(1, std::llround(patch_mm));
}

GridSummary partition_grid(const LabelMask& mask, const SamplerConfig& cfg) {
    if (!mask.geometry().is_unit_isotropic()) {
        throw DataError("partition_grid: mask must be on a 1 mm isotropic grid");
    }
    GridSummary grid;
    grid.cell_side = cfg.cell_side();
    const Index3& d = mask.dims();
    for (int a = 0; a < 3; ++a) {
        grid.cell_dims[a] = (d[a] + grid.cell_side - 1) / grid.cell_side;
    }
    grid.cells.resize(static_cast<std::size_t>(grid.cell_dims[0] * grid.cell_dims[1] * grid.cell_dims[2]));
    for (std::int64_t cz = 0; cz < grid.cell_dims[2]; ++cz) {
        for (std::int64_t cy = 0; cy < grid.cell_dims[1]; ++cy) {
            for (std::int64_t cx = 0; cx < grid.cell_dims[0]; ++cx) {
                auto& cell = grid.cells[static_cast<std::size_t>((cz * grid.cell_dims[1] + cy) * grid.cell_dims[0] + cx)];
                const Index3 c{cx, cy, cz};
                for (int a = 0; a < 3; ++a) {
                    cell.lo[a] = c[a] * grid.cell_side;
                    cell.hi[a] = std::min(d[a], cell.lo[a] + grid.cell_side);
                }
                for (std::int64_t z = cell.lo[2]; z < cell.hi[2]; ++z) {
                    for (std::int64_t y = cell.lo[1]; y < cell.hi[1]; ++y) {
                        const std::size_t row = mask.linear(0, y, z);
                        for (std::int64_t x = cell.lo[0]; x < cell.hi[0]; ++x) {
                            ++cell.counts[mask[row + static_cast<std::size_t>(x)]];
                        }
                    }
                }
                // Padding voxels are background.
                const std::int64_t present = (cell.hi[0] - cell.lo[0]) * (cell.hi[1] - cell.lo[1]) * (cell.hi[2] - cell.lo[2]);
                cell.counts[code(ClassId::background)] += grid.cell_volume() - present;
                for (int k = 0; k < kClassCount; ++k) {
                    grid.totals[static_cast<std::size_t>(k)] += cell.counts[static_cast<std::size_t>(k)];
                }
            }
        }
    }
    return grid;
}

PatchPairImages extract_patch(const Volume& image, const LabelMask& mask, const Index3& center, std::int64_t side) {
    const Geometry& src = image.geometry();
    const std::int64_t half = side / 2;
    const Index3 start{center[0] - half, center[1] - half, center[2] - half};
    Geometry g;
    g.dims = {side, side, side};
    g.spacing = src.spacing;
    g.origin = src.physical(start);
    PatchPairImages out{Volume(g, kPadHu), LabelMask(g, code(ClassId::background))};
    for (std::int64_t z = 0; z < side; ++z) {
        const std::int64_t sz = start[2] + z;
        if (sz < 0 || sz >= src.dims[2]) {
            continue;
        }
        for (std::int64_t y = 0; y < side; ++y) {
            const std::int64_t sy = start[1] + y;
            if (sy < 0 || sy >= src.dims[1]) {
                continue;
            }
            const std::int64_t x0 = std::max<std::int64_t>(0, -start[0]);
            const std::int64_t x1 = std::min<std::int64_t>(side, src.dims[0] - start[0]);
            if (x0 >= x1) {
                continue;
            }
            const std::size_t from = image.linear(start[0] + x0, sy, sz);
            const std::size_t to = out.image.linear(x0, y, z);
            const auto n = static_cast<std::size_t>(x1 - x0);
            std::copy_n(image.data().begin() + static_cast<std::ptrdiff_t>(from), n,
                        out.image.data().begin() + static_cast<std::ptrdiff_t>(to));
            std::copy_n(mask.data().begin() + static_cast<std::ptrdiff_t>(from), n,
                        out.mask.data().begin() + static_cast<std::ptrdiff_t>(to));
        }
    }
    return out;
}

namespace {

PatchRecord make_record(const Volume& image, const LabelMask& mask, ClassId cls, PatchKind kind,
                        const Index3& center, std::int64_t side) {
    PatchRecord r;
    r.class_of_interest = cls;
    r.kind = kind;
    r.center = center;
    auto patch = extract_patch(image, mask, center, side);
    r.image = std::move(patch.image);
    r.mask = std::move(patch.mask);
    return r;
}

}  // namespace

std::optional<PatchPair> sample_pair(const GridSummary& grid, const Volume& image, const LabelMask& mask,
                                     ClassId cls, Rng& rng, const SamplerConfig& cfg) {
    const auto k = code(cls);
    if (grid.totals[k] == 0) {
        return std::nullopt;
    }
    std::vector<std::size_t> fg_cells;
    std::vector<std::size_t> bg_cells;
    for (std::size_t i = 0; i < grid.cells.size(); ++i) {
        if (grid.cells[i].counts[k] > 0) {
            fg_cells.push_back(i);
        }
        if (grid.fraction(i, cls) <= cfg.background_fg_fraction_max) {
            bg_cells.push_back(i);
        }
    }
    bool relaxed = false;
    if (bg_cells.empty()) {
        relaxed = true;
        std::size_t best = 0;
        for (std::size_t i = 1; i < grid.cells.size(); ++i) {
            if (grid.cells[i].counts[k] < grid.cells[best].counts[k]) {
                best = i;
            }
        }
        bg_cells.push_back(best);
    }

    // Foreground: uniform cell among those holding the class, then uniform voxel of the class in it.
    const auto& fg_cell = grid.cells[fg_cells[rng.below(fg_cells.size())]];
    auto target = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(fg_cell.counts[k])));
    Index3 fg_center{-1, -1, -1};
    for (std::int64_t z = fg_cell.lo[2]; z < fg_cell.hi[2] && fg_center[0] < 0; ++z) {
        for (std::int64_t y = fg_cell.lo[1]; y < fg_cell.hi[1] && fg_center[0] < 0; ++y) {
            const std::size_t row = mask.linear(0, y, z);
            for (std::int64_t x = fg_cell.lo[0]; x < fg_cell.hi[0]; ++x) {
                if (mask[row + static_cast<std::size_t>(x)] == k && target-- == 0) {
                    fg_center = {x, y, z};
                    break;
                }
            }
        }
    }

    // Background: uniform qualifying cell, then uniform voxel within its in-volume part.
    const auto& bg_cell = grid.cells[bg_cells[rng.below(bg_cells.size())]];
    Index3 bg_center{};
    for (int a = 0; a < 3; ++a) {
        bg_center[a] = bg_cell.lo[a] + static_cast<std::int64_t>(
                                           rng.below(static_cast<std::uint64_t>(bg_cell.hi[a] - bg_cell.lo[a])));
    }

    const std::int64_t side = cfg.patch_side();
    PatchPair pair{make_record(image, mask, cls, PatchKind::foreground, fg_center, side),
                   make_record(image, mask, cls, PatchKind::background, bg_center, side)};
    pair.background.relaxed_background = relaxed;
    return pair;
}

RoundResult sample_round(const Case& c, const GridSummary& grid, const SamplerConfig& cfg, Rng& rng) {
    RoundResult out;
    for (const ClassId cls : kTissues) {
        auto pair = sample_pair(grid, c.image, c.mask, cls, rng, cfg);
        if (!pair) {
            out.skipped.push_back(cls);
            continue;
        }
        if (pair->background.relaxed_background) {
            out.relaxed.push_back(cls);
        }
        pair->foreground.case_id = c.id;
        pair->background.case_id = c.id;
        out.records.push_back(std::move(pair->foreground));
        out.records.push_back(std::move(pair->background));
    }
    return out;
}

std::uint64_t task_seed(const SamplerConfig& cfg, std::string_view case_id, std::uint64_t epoch, int round) {
    return derive_seed(cfg.seed, {hash_string(case_id), epoch, static_cast<std::uint64_t>(round)});
}

std::vector<GridSummary> summarize_cases(std::span<const Case> cases, const SamplerConfig& cfg) {
    std::vector<GridSummary> grids;
    grids.reserve(cases.size());
    for (const auto& c : cases) {
        grids.push_back(partition_grid(c.mask, cfg));
    }
    return grids;
}

EpochStream::EpochStream(std::span<const Case> cases, std::span<const GridSummary> grids, const SamplerConfig& cfg,
                         std::uint64_t epoch, StreamOptions options)
    : cases_(cases), grids_(grids), cfg_(cfg), epoch_(epoch), options_(std::move(options)) {
    cfg_.validate();
    if (cases.empty()) {
        throw DataError("epoch_stream: empty case list");
    }
    if (grids.size() != cases.size()) {
        throw DataError("epoch_stream: one grid summary per case is required");
    }
    for (std::size_t c = 0; c < cases.size(); ++c) {
        for (int r = 0; r < cfg_.pairs_per_class_per_case; ++r) {
            tasks_.push_back({c, r});
        }
    }
    Rng order(derive_seed(cfg_.seed, {hash_string("epoch-order"), epoch_}));
    order.shuffle(std::span<Task>(tasks_));
    slots_.resize(tasks_.size());
    options_.lookahead = std::max<std::size_t>(options_.lookahead, 1);
    if (options_.workers > 1) {
        for (int w = 0; w < options_.workers; ++w) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }
}

EpochStream::~EpochStream() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    space_.notify_all();
    for (auto& t : threads_) {
        t.join();
    }
}

std::vector<PatchRecord> EpochStream::produce(std::size_t task_index) {
    const Task& task = tasks_[task_index];
    const Case& c = cases_[task.case_index];
    const std::uint64_t seed = task_seed(cfg_, c.id, epoch_, task.round);
    Rng rng(seed);
    RoundResult round = sample_round(c, grids_[task.case_index], cfg_, rng);
    for (auto& r : round.records) {
        r.round = task.round;
        r.task_seed = seed;
        if (options_.augment) {
            Rng arng(derive_seed(seed, {hash_string("augment"), code(r.class_of_interest),
                                        static_cast<std::uint64_t>(r.kind)}));
            AugmentSample s = draw(*options_.augment, arng);
            if (!s.is_identity()) {
                auto out = apply(s, r.image, r.mask);
                r.image = std::move(out.image);
                r.mask = std::move(out.mask);
            }
            r.augmentation = s;
        }
    }
    if (task.round == 0 && (!round.skipped.empty() || !round.relaxed.empty())) {
        std::lock_guard lock(mutex_);
        for (const ClassId cls : round.skipped) {
            warnings_.push_back(c.id + ": " + std::string(class_name(cls)) + " absent, skipped");
        }
        for (const ClassId cls : round.relaxed) {
            warnings_.push_back(c.id + ": no background cell under the fraction bound for " +
                                std::string(class_name(cls)) + ", used the minimum-fraction cell");
        }
    }
    return std::move(round.records);
}

void EpochStream::worker_loop() {
    for (;;) {
        std::size_t task = 0;
        {
            std::unique_lock lock(mutex_);
            space_.wait(lock, [&] {
                return stopping_ || error_ || next_claim_ >= tasks_.size() ||
                       next_claim_ < next_consume_ + options_.lookahead;
            });
            if (stopping_ || error_ || next_claim_ >= tasks_.size()) {
                return;
            }
            task = next_claim_++;
        }
        try {
            auto records = produce(task);
            std::lock_guard lock(mutex_);
            slots_[task] = std::move(records);
        } catch (...) {
            std::lock_guard lock(mutex_);
            if (!error_) {
                error_ = std::current_exception();
            }
        }
        ready_.notify_all();
    }
}

std::optional<PatchRecord> EpochStream::next() {
    while (current_pos_ >= current_.size()) {
        if (next_consume_ >= tasks_.size()) {
            return std::nullopt;
        }
        if (threads_.empty()) {
            current_ = produce(next_consume_);
        } else {
            std::unique_lock lock(mutex_);
            ready_.wait(lock, [&] { return error_ || slots_[next_consume_].has_value(); });
            if (error_) {
                std::rethrow_exception(error_);
            }
            current_ = std::move(*slots_[next_consume_]);
            slots_[next_consume_].reset();
        }
        ++next_consume_;
        current_pos_ = 0;
        space_.notify_all();
    }
    return std::move(current_[current_pos_++]);
}

std::vector<std::string> EpochStream::warnings() const {
    std::lock_guard lock(mutex_);
    return warnings_;
}

void to_json(nlohmann::json& j, const SamplerConfig& c) {
    j = nlohmann::json{{"cell_mm", c.cell_mm},
                       {"patch_mm", c.patch_mm},
                       {"background_fg_fraction_max", c.background_fg_fraction_max},
                       {"pairs_per_class_per_case", c.pairs_per_class_per_case},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SamplerConfig& c) {
    for (const auto& [key, value] : j.items()) {
        if (key != "cell_mm" && key != "patch_mm" && key != "background_fg_fraction_max" &&
            key != "pairs_per_class_per_case" && key != "seed") {
            throw UsageError("sampler: unknown key '" + key + "'");
        }
    }
    const SamplerConfig d;
    c.cell_mm = j.value("cell_mm", d.cell_mm);
    c.patch_mm = j.value("patch_mm", d.patch_mm);
    c.background_fg_fraction_max = j.value("background_fg_fraction_max", d.background_fg_fraction_max);
    c.pairs_per_class_per_case = j.value("pairs_per_class_per_case", d.pairs_per_class_per_case);
    c.seed = j.value("seed", d.seed);
    c.validate();
}

}  // namespace bcseg
