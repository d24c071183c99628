#pragma once

#include <condition_variable>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bcseg/augment.hpp"
#include "bcseg/case.hpp"
#include "bcseg/rng.hpp"
#include "bcseg/volume.hpp"

namespace bcseg {

struct SamplerConfig {
    double cell_mm = 60.0;
    double patch_mm = 80.0;
    /// A cell qualifies as background for a class when at most this fraction of its voxels carry it.
    double background_fg_fraction_max = 0.01;
    int pairs_per_class_per_case = 8;
    std::uint64_t seed = 1;

    void validate() const;
    /// Sides in voxels on the 1 mm isotropic grid.
    [[nodiscard]] std::int64_t cell_side() const;
    [[nodiscard]] std::int64_t patch_side() const;
};

/// Per-cell class histograms over the padded isotropic mask.
struct GridSummary {
    struct Cell {
        Index3 lo;  // first voxel, inclusive
        Index3 hi;  // last voxel + 1, clipped to the mask
        std::array<std::int64_t, kClassCount> counts{};
    };

    Index3 cell_dims{};
    std::int64_t cell_side = 0;
    std::vector<Cell> cells;  // x fastest
    std::array<std::int64_t, kClassCount> totals{};

    /// Voxels per cell including padding (cell_side^3).
    [[nodiscard]] std::int64_t cell_volume() const noexcept { return cell_side * cell_side * cell_side; }
    [[nodiscard]] double fraction(std::size_t cell, ClassId c) const noexcept {
        return static_cast<double>(cells[cell].counts[code(c)]) / static_cast<double>(cell_volume());
    }
};

/// Throws DataError if the mask is not on a 1 mm isotropic grid.
[[nodiscard]] GridSummary partition_grid(const LabelMask& mask, const SamplerConfig& cfg);

enum class PatchKind { foreground, background };

struct PatchRecord {
    std::string case_id;
    ClassId class_of_interest = ClassId::vat;
    PatchKind kind = PatchKind::foreground;
    Index3 center{};
    int round = 0;
    std::uint64_t task_seed = 0;
    bool relaxed_background = false;
    Volume image;
    LabelMask mask;
    std::optional<AugmentSample> augmentation;
};

/// Cube of `side` voxels spanning center - side/2 .. center + side/2 - 1 per
/// axis; out-of-volume voxels are kPadHu / background.
[[nodiscard]] PatchPairImages extract_patch(const Volume& image, const LabelMask& mask, const Index3& center,
                                            std::int64_t side);

struct PatchPair {
    PatchRecord foreground;
    PatchRecord background;
};

/// One balanced pair for `cls`. Returns nullopt when the class is absent.
/// When no cell is under the background fraction bound, the cell with the
/// smallest fraction is used and `relaxed_background` is set on the bg record.
[[nodiscard]] std::optional<PatchPair> sample_pair(const GridSummary& grid, const Volume& image,
                                                   const LabelMask& mask, ClassId cls, Rng& rng,
                                                   const SamplerConfig& cfg);

struct RoundResult {
    std::vector<PatchRecord> records;
    std::vector<ClassId> skipped;  // absent classes
    std::vector<ClassId> relaxed;  // classes whose background cell was relaxed
};

/// One pair per present tissue class, in class-code order (fg then bg).
[[nodiscard]] RoundResult sample_round(const Case& c, const GridSummary& grid, const SamplerConfig& cfg, Rng& rng);

/// Seed of the (case, epoch, round) task.
[[nodiscard]] std::uint64_t task_seed(const SamplerConfig& cfg, std::string_view case_id, std::uint64_t epoch,
                                      int round);

struct StreamOptions {
    /// Worker threads producing records; 0 or 1 produces inline on the consumer thread.
    int workers = 1;
    /// How many tasks may be produced ahead of the consumer.
    std::size_t lookahead = 8;
    /// Augmentation applied to each record, if any.
    std::optional<AugmentSpec> augment;
};

/// Ordered record stream for one epoch. Tasks (case, round) are shuffled with
/// a seed derived from (seed, epoch); each task uses its own derived RNG, and
/// records are delivered in task order, so the stream is identical for any
/// worker count.
class EpochStream {
public:
    /// `cases` and `grids` must outlive the stream; grids[i] summarizes cases[i].
    EpochStream(std::span<const Case> cases, std::span<const GridSummary> grids, const SamplerConfig& cfg,
                std::uint64_t epoch, StreamOptions options = {});
    ~EpochStream();
    EpochStream(const EpochStream&) = delete;
    EpochStream& operator=(const EpochStream&) = delete;

    /// Next record, or nullopt at the end of the epoch. Rethrows producer errors.
    std::optional<PatchRecord> next();

    [[nodiscard]] std::size_t task_count() const noexcept { return tasks_.size(); }
    /// Skip/relax notices gathered so far ("case_id: IMAT absent", ...).
    [[nodiscard]] std::vector<std::string> warnings() const;

private:
    struct Task {
        std::size_t case_index;
        int round;
    };

    std::vector<PatchRecord> produce(std::size_t task_index);
    void worker_loop();

    std::span<const Case> cases_;
    std::span<const GridSummary> grids_;
    SamplerConfig cfg_;
    std::uint64_t epoch_;
    StreamOptions options_;
    std::vector<Task> tasks_;

    mutable std::mutex mutex_;
    std::condition_variable ready_;
    std::condition_variable space_;
    std::vector<std::optional<std::vector<PatchRecord>>> slots_;
    std::size_t next_claim_ = 0;
    std::size_t next_consume_ = 0;
    bool stopping_ = false;
    std::exception_ptr error_;
    std::vector<std::string> warnings_;
    std::vector<PatchRecord> current_;
    std::size_t current_pos_ = 0;
    std::vector<std::thread> threads_;
};

/// Grid summaries for every case, in order.
[[nodiscard]] std::vector<GridSummary> summarize_cases(std::span<const Case> cases, const SamplerConfig& cfg);

void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);

}  // namespace bcseg
