#include "bcseg/threshold_segmenter.hpp"

#include <algorithm>
#include <array>
#include <limits>

#include <nlohmann/json.hpp>

#include "bcseg/morphology.hpp"

namespace bcseg {

void HuWindows::validate() const {
    const bool ordered = fat.lo <= fat.hi && fat.hi < muscle.lo && muscle.lo <= muscle.hi &&
                         muscle.hi < bone.lo && bone.lo <= bone.hi;
    if (!ordered) {
        throw UsageError("HU windows must be ordered and disjoint (fat < muscle < bone)");
    }
}

HuWindows HuWindows::shifted(float delta) const noexcept {
    HuWindows w = *this;
    for (HuInterval* iv : {&w.fat, &w.muscle, &w.bone}) {
        iv->lo += delta;
        iv->hi += delta;
    }
    w.body_min += delta;
    return w;
}

TissuePartition partition_tissues(const Volume& volume, const HuWindows& windows) {
    const Geometry& g = volume.geometry();
    BinaryMask above(g, 0);
    bool any = false;
    for (std::size_t i = 0; i < volume.size(); ++i) {
        if (volume[i] > windows.body_min) {
            above[i] = 1;
            any = true;
        }
    }
    if (!any) {
        throw EmptyBodyError();
    }
    TissuePartition out{fill_holes(largest_component(above)), Image3<std::uint8_t>(g, 0)};
    for (std::size_t i = 0; i < volume.size(); ++i) {
        if (out.body[i] == 0) {
            continue;
        }
        const float v = volume[i];
        TissueFamily f = TissueFamily::none;
        if (windows.fat.contains(v)) {
            f = TissueFamily::fat;
        } else if (windows.muscle.contains(v)) {
            f = TissueFamily::muscle;
        } else if (windows.bone.contains(v)) {
            f = TissueFamily::bone;
        }
        out.family[i] = static_cast<std::uint8_t>(f);
    }
    return out;
}

LabelMask median_filter_labels(const LabelMask& labels) {
    const Index3& d = labels.dims();
    LabelMask out(labels.geometry(), 0);
    constexpr int kWindow = 27;
    for (std::int64_t z = 0; z < d[2]; ++z) {
        for (std::int64_t y = 0; y < d[1]; ++y) {
            for (std::int64_t x = 0; x < d[0]; ++x) {
                std::array<int, kClassCount> hist{};
                for (int dz = -kMedianRadius; dz <= kMedianRadius; ++dz) {
                    const auto zz = std::clamp<std::int64_t>(z + dz, 0, d[2] - 1);
                    for (int dy = -kMedianRadius; dy <= kMedianRadius; ++dy) {
                        const auto yy = std::clamp<std::int64_t>(y + dy, 0, d[1] - 1);
                        const std::size_t row = labels.linear(0, yy, zz);
                        for (int dx = -kMedianRadius; dx <= kMedianRadius; ++dx) {
                            const auto xx = std::clamp<std::int64_t>(x + dx, 0, d[0] - 1);
                            ++hist[labels[row + static_cast<std::size_t>(xx)]];
                        }
                    }
                }
                int seen = 0;
                int c = 0;
                for (; c < kClassCount; ++c) {
                    seen += hist[static_cast<std::size_t>(c)];
                    if (seen > kWindow / 2) {
                        break;
                    }
                }
                out.at(x, y, z) = static_cast<std::uint8_t>(c);
            }
        }
    }
    return out;
}

LabelMask threshold_segment(const Volume& volume, const HuWindows& windows) {
    const Geometry& g = volume.geometry();
    const TissuePartition part = partition_tissues(volume, windows);
    const std::size_t n = volume.size();
    auto family = [&](std::size_t i) { return static_cast<TissueFamily>(part.family[i]); };

    BinaryMask muscle(g, 0);
    BinaryMask fat(g, 0);
    for (std::size_t i = 0; i < n; ++i) {
        muscle[i] = family(i) == TissueFamily::muscle ? 1 : 0;
        fat[i] = family(i) == TissueFamily::fat ? 1 : 0;
    }
    const BinaryMask wall = morphology(muscle, MorphOp::close, kWallClosingRadius);

    LabelMask labels(g, code(ClassId::background));
    for (std::size_t i = 0; i < n; ++i) {
        if (family(i) == TissueFamily::muscle) {
            labels[i] = code(ClassId::sm);
        } else if (family(i) == TissueFamily::bone) {
            labels[i] = code(ClassId::bone);
        }
    }

    // IMAT: raw fat components whose whole in-grid boundary is muscle.
    const Components raw = label_components(fat);
    std::vector<std::uint8_t> enclosed(raw.count() + 1, 1);
    std::vector<std::uint8_t> touches_outside(raw.count() + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto l = static_cast<std::size_t>(raw.labels[i]);
        if (l == 0) {
            continue;
        }
        for_each_neighbor6(g, i, [&](std::size_t nb) {
            if (static_cast<std::size_t>(raw.labels[nb]) == l) {
                return;
            }
            if (family(nb) != TissueFamily::muscle) {
                enclosed[l] = 0;
            }
            if (part.body[nb] == 0) {
                touches_outside[l] = 1;
            }
        });
    }

    // Fat outside the wall, split into components that the wall keeps apart.
    BinaryMask core(g, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto l = static_cast<std::size_t>(raw.labels[i]);
        core[i] = (l != 0 && enclosed[l] == 0 && wall[i] == 0) ? 1 : 0;
    }
    const Components cores = label_components(core);
    std::vector<std::uint8_t> core_sat(cores.count() + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto l = static_cast<std::size_t>(cores.labels[i]);
        if (l == 0) {
            continue;
        }
        for_each_neighbor6(g, i, [&](std::size_t nb) {
            if (part.body[nb] == 0) {
                core_sat[l] = 1;
            }
        });
    }

    std::vector<std::size_t> frontier;
    for (std::size_t i = 0; i < n; ++i) {
        const auto l = static_cast<std::size_t>(raw.labels[i]);
        if (l == 0) {
            continue;
        }
        if (enclosed[l] != 0) {
            labels[i] = code(ClassId::imat);
        } else if (cores.labels[i] != 0) {
            labels[i] = code(core_sat[static_cast<std::size_t>(cores.labels[i])] != 0 ? ClassId::sat : ClassId::vat);
            frontier.push_back(i);
        }
    }
    // Wall-covered fat takes the label of the closest classified fat (BFS through fat).
    for (std::size_t head = 0; head < frontier.size(); ++head) {
        const std::size_t i = frontier[head];
        for_each_neighbor6(g, i, [&](std::size_t nb) {
            const auto l = static_cast<std::size_t>(raw.labels[nb]);
            if (l != 0 && enclosed[l] == 0 && labels[nb] == code(ClassId::background)) {
                labels[nb] = labels[i];
                frontier.push_back(nb);
            }
        });
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto l = static_cast<std::size_t>(raw.labels[i]);
        if (l != 0 && labels[i] == code(ClassId::background)) {
            labels[i] = code(touches_outside[l] != 0 ? ClassId::sat : ClassId::vat);
        }
    }
    return median_filter_labels(labels);
}

void to_json(nlohmann::json& j, const HuWindows& w) {
    j = nlohmann::json{{"fat", {w.fat.lo, w.fat.hi}},
                       {"muscle", {w.muscle.lo, w.muscle.hi}},
                       {"bone", {w.bone.lo, w.bone.hi}},
                       {"body_min", w.body_min}};
}

void from_json(const nlohmann::json& j, HuWindows& w) {
    auto interval = [&](const char* key, HuInterval fallback) {
        if (!j.contains(key)) {
            return fallback;
        }
        const auto v = j.at(key).get<std::array<float, 2>>();
        return HuInterval{v[0], v[1]};
    };
    for (const auto& [key, value] : j.items()) {
        if (key != "fat" && key != "muscle" && key != "bone" && key != "body_min") {
            throw UsageError("hu windows: unknown key '" + key + "'");
        }
    }
    const HuWindows d;
    w.fat = interval("fat", d.fat);
    w.muscle = interval("muscle", d.muscle);
    w.bone = interval("bone", d.bone);
    w.body_min = j.value("body_min", d.body_min);
    w.validate();
}

}  // namespace bcseg
