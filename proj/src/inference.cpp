#include "bcseg/inference.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"
#include "bcseg/resample.hpp"

namespace bcseg {

void InferenceConfig::validate() const {
    if (stride < 1 || patch_side < stride) {
        throw UsageError("inference: need 1 <= stride <= patch_side");
    }
}

std::vector<std::int64_t> axis_origins(std::int64_t dim, std::int64_t patch_side, std::int64_t stride) {
    std::vector<std::int64_t> out;
    for (std::int64_t o = 0; o + patch_side < dim; o += stride) {
        out.push_back(o);
    }
    const std::int64_t last = std::max<std::int64_t>(0, dim - patch_side);
    if (out.empty() || out.back() != last) {
        out.push_back(last);
    }
    return out;
}

TilePlan plan_tiles(const Geometry& geometry, std::int64_t patch_side, std::int64_t stride) {
    InferenceConfig{patch_side, stride}.validate();
    TilePlan plan;
    plan.dims = geometry.dims;
    plan.patch_side = patch_side;
    plan.stride = stride;
    std::array<std::vector<std::int64_t>, 3> axes;
    for (int a = 0; a < 3; ++a) {
        plan.padded_dims[a] = std::max(geometry.dims[a], patch_side);
        axes[a] = axis_origins(geometry.dims[a], patch_side, stride);
    }
    for (auto z : axes[2]) {
        for (auto y : axes[1]) {
            for (auto x : axes[0]) {
                plan.origins.push_back({x, y, z});
            }
        }
    }
    return plan;
}

ProbVolume predict_volume(const Volume& volume, std::span<BackendHandle* const> backends, const TilePlan& plan) {
    if (backends.empty()) {
        throw UsageError("predict_volume: no backend");
    }
    if (plan.dims != volume.dims()) {
        throw DataError("predict_volume: tile plan was made for different dims");
    }
    const std::uint32_t channels = backends[0]->class_count();
    for (auto* b : backends) {
        if (b->class_count() != channels || static_cast<std::int64_t>(b->patch_side()) != plan.patch_side) {
            throw BackendError("predict_volume: backends disagree on class count or patch side");
        }
    }
    ProbVolume out;
    out.geometry = volume.geometry();
    out.channels = channels;
    const std::size_t n = volume.size();
    out.probs.assign(static_cast<std::size_t>(channels) * n, 0.0F);
    out.coverage.assign(n, 0);

    const std::int64_t side = plan.patch_side;
    const Index3 d = volume.dims();
    std::mutex mutex;
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;

    auto work = [&](BackendHandle& backend) {
        for (;;) {
            const std::size_t w = next.fetch_add(1);
            if (w >= plan.origins.size()) {
                return;
            }
            {
                std::lock_guard lock(mutex);
                if (error) {
                    return;
                }
            }
            const Index3& o = plan.origins[w];
            const std::size_t pn = static_cast<std::size_t>(side * side * side);
            protocol::TensorF32 window;
            window.dims = {1, static_cast<std::uint32_t>(side), static_cast<std::uint32_t>(side),
                           static_cast<std::uint32_t>(side)};
            window.data.assign(pn, protocol::normalize_hu(kPadHu));
            for (std::int64_t z = 0; z < side && o[2] + z < d[2]; ++z) {
                for (std::int64_t y = 0; y < side && o[1] + y < d[1]; ++y) {
                    for (std::int64_t x = 0; x < side && o[0] + x < d[0]; ++x) {
                        window.data[static_cast<std::size_t>((z * side + y) * side + x)] =
                            protocol::normalize_hu(volume.at(o[0] + x, o[1] + y, o[2] + z));
                    }
                }
            }
            const auto probs = backend.infer(window);
            std::lock_guard lock(mutex);
            for (std::int64_t z = 0; z < side && o[2] + z < d[2]; ++z) {
                for (std::int64_t y = 0; y < side && o[1] + y < d[1]; ++y) {
                    for (std::int64_t x = 0; x < side && o[0] + x < d[0]; ++x) {
                        const std::size_t vi = volume.linear(o[0] + x, o[1] + y, o[2] + z);
                        const std::size_t pi = static_cast<std::size_t>((z * side + y) * side + x);
                        for (std::uint32_t c = 0; c < channels; ++c) {
                            out.probs[c * n + vi] += probs.data[c * pn + pi];
                        }
                        ++out.coverage[vi];
                    }
                }
            }
        }
    };

    if (backends.size() == 1) {
        work(*backends[0]);
    } else {
        std::vector<std::thread> threads;
        for (auto* b : backends) {
            threads.emplace_back([&, b] {
                try {
                    work(*b);
                } catch (...) {
                    std::lock_guard lock(mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : threads) {
            t.join();
        }
        if (error) {
            std::rethrow_exception(error);
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (out.coverage[i] == 0) {
            throw DataError("predict_volume: tile plan leaves a voxel uncovered");
        }
        const float inv = 1.0F / static_cast<float>(out.coverage[i]);
        for (std::uint32_t c = 0; c < channels; ++c) {
            out.probs[c * n + i] *= inv;
        }
    }
    return out;
}

ProbVolume predict_volume(const Volume& volume, BackendHandle& backend, const TilePlan& plan) {
    BackendHandle* one[] = {&backend};
    return predict_volume(volume, one, plan);
}

LabelMask argmax_labels(const ProbVolume& p) {
    LabelMask out(p.geometry, 0);
    const std::size_t n = p.voxel_count();
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t best = 0;
        for (std::uint32_t c = 1; c < p.channels; ++c) {
            if (p.at(c, i) > p.at(best, i)) {
                best = c;
            }
        }
        out[i] = static_cast<std::uint8_t>(best);
    }
    return out;
}

LabelMask channel_labels_to_classes(const LabelMask& channels, const HelloMode& mode) {
    if (!mode.target) {
        return channels;
    }
    LabelMask out(channels.geometry(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = channels[i] == 1 ? code(*mode.target) : 0;
    }
    return out;
}

LabelMask combine_separate(std::span<const ProbVolume> volumes, std::span<const ClassId> classes) {
    if (volumes.empty() || volumes.size() != classes.size()) {
        throw UsageError("combine_separate: one probability volume per class is required");
    }
    for (const auto& v : volumes) {
        if (v.channels != 2 || !(v.geometry == volumes[0].geometry)) {
            throw DataError("combine_separate: volumes must be 2-channel and share a geometry");
        }
    }
    std::vector<std::size_t> order(classes.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        order[k] = k;
    }
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return code(classes[a]) < code(classes[b]); });
    LabelMask out(volumes[0].geometry, 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        float best = 0.5F;
        std::uint8_t label = 0;
        for (auto k : order) {
            const float p = volumes[k].at(1, i);
            if (p > best) {
                best = p;
                label = code(classes[k]);
            }
        }
        out[i] = label;
    }
    return out;
}

LabelMask segment_case(const Volume& native, std::span<BackendHandle* const> backends, const InferenceConfig& cfg,
                       const HelloMode& mode) {
    cfg.validate();
    if (backends.empty()) {
        throw UsageError("segment_case: no backend");
    }
    if (backends[0]->class_count() != mode.class_count()) {
        throw BackendError("segment_case: backend class count does not match the inference mode");
    }
    const Volume iso = resample_to_isotropic(native);
    const TilePlan plan = plan_tiles(iso.geometry(), cfg.patch_side, cfg.stride);
    const auto labels = channel_labels_to_classes(argmax_labels(predict_volume(iso, backends, plan)), mode);
    return resample_mask(labels, native.geometry());
}

LabelMask segment_case(const Volume& native, BackendHandle& backend, const InferenceConfig& cfg,
                       const HelloMode& mode) {
    BackendHandle* one[] = {&backend};
    return segment_case(native, one, cfg, mode);
}

LabelMask segment_case_separate(const Volume& native, std::span<BackendHandle* const> per_class,
                                std::span<const ClassId> classes, const InferenceConfig& cfg) {
    cfg.validate();
    if (per_class.size() != classes.size() || per_class.empty()) {
        throw UsageError("segment_case_separate: one backend per class is required");
    }
    const Volume iso = resample_to_isotropic(native);
    const TilePlan plan = plan_tiles(iso.geometry(), cfg.patch_side, cfg.stride);
    std::vector<ProbVolume> volumes;
    for (auto* backend : per_class) {
        if (backend->class_count() != 2) {
            throw BackendError("segment_case_separate: backends must be 2-channel sessions");
        }
        volumes.push_back(predict_volume(iso, *backend, plan));
    }
    return resample_mask(combine_separate(volumes, classes), native.geometry());
}

void to_json(nlohmann::json& j, const InferenceConfig& c) {
    j = nlohmann::json{{"patch_side", c.patch_side}, {"stride", c.stride}};
}

void from_json(const nlohmann::json& j, InferenceConfig& c) {
    for (const auto& [key, value] : j.items()) {
        if (key != "patch_side" && key != "stride") {
            throw UsageError("inference: unknown key '" + key + "'");
        }
    }
    const InferenceConfig d;
    c.patch_side = j.value("patch_side", d.patch_side);
    c.stride = j.value("stride", d.stride);
    c.validate();
}

}  // namespace bcseg
