#include "bcseg/morphology.hpp"

#include <algorithm>

namespace bcseg {

namespace {

/// One separable pass along `axis`. For dilation a voxel becomes 1 when any
/// in-grid voxel of its window is 1; for erosion it stays 1 only when every
/// in-grid voxel of its window is 1.
void pass_1d(const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out, const Index3& d, int axis,
             int r, bool dilation) {
    const std::int64_t n = d[axis];
    const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? d[0] : d[0] * d[1]);
    const std::int64_t lines_a = axis == 0 ? d[1] : d[0];
    const std::int64_t lines_b = axis == 2 ? d[1] : d[2];
    std::vector<std::int32_t> prefix(static_cast<std::size_t>(n + 1));
    for (std::int64_t b = 0; b < lines_b; ++b) {
        for (std::int64_t a = 0; a < lines_a; ++a) {
            std::int64_t base = 0;
            if (axis == 0) {
                base = (b * d[1] + a) * d[0];
            } else if (axis == 1) {
                base = b * d[0] * d[1] + a;
            } else {
                base = b * d[0] + a;
            }
            prefix[0] = 0;
            for (std::int64_t i = 0; i < n; ++i) {
                prefix[static_cast<std::size_t>(i + 1)] =
                    prefix[static_cast<std::size_t>(i)] + (in[static_cast<std::size_t>(base + i * stride)] != 0);
            }
            for (std::int64_t i = 0; i < n; ++i) {
                const std::int64_t lo = std::max<std::int64_t>(0, i - r);
                const std::int64_t hi = std::min<std::int64_t>(n - 1, i + r);
                const auto count = prefix[static_cast<std::size_t>(hi + 1)] - prefix[static_cast<std::size_t>(lo)];
                const bool on = dilation ? count > 0 : count == hi - lo + 1;
                out[static_cast<std::size_t>(base + i * stride)] = on ? 1 : 0;
            }
        }
    }
}

BinaryMask separable(const BinaryMask& mask, int radius, bool dilation) {
    if (radius <= 0) {
        BinaryMask copy = mask;
        for (auto& v : copy.data()) {
            v = v != 0 ? 1 : 0;
        }
        return copy;
    }
    std::vector<std::uint8_t> a(mask.data().begin(), mask.data().end());
    std::vector<std::uint8_t> b(a.size());
    for (int axis = 0; axis < 3; ++axis) {
        pass_1d(a, b, mask.dims(), axis, radius, dilation);
        a.swap(b);
    }
    return BinaryMask(mask.geometry(), std::move(a));
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, int radius) { return separable(mask, radius, false); }

BinaryMask dilate(const BinaryMask& mask, int radius) { return separable(mask, radius, true); }

Components label_components(const BinaryMask& mask) {
    Components out;
    out.labels.assign(mask.size(), 0);
    std::vector<std::size_t> queue;
    const Geometry& g = mask.geometry();
    for (std::size_t seed = 0; seed < mask.size(); ++seed) {
        if (mask[seed] == 0 || out.labels[seed] != 0) {
            continue;
        }
        const auto label = static_cast<std::int32_t>(out.sizes.size() + 1);
        std::int64_t size = 0;
        queue.clear();
        queue.push_back(seed);
        out.labels[seed] = label;
        for (std::size_t head = 0; head < queue.size(); ++head) {
            ++size;
            for_each_neighbor6(g, queue[head], [&](std::size_t n) {
                if (mask[n] != 0 && out.labels[n] == 0) {
                    out.labels[n] = label;
                    queue.push_back(n);
                }
            });
        }
        out.sizes.push_back(size);
    }
    return out;
}

BinaryMask fill_holes(const BinaryMask& mask) {
    const Geometry& g = mask.geometry();
    const Index3& d = g.dims;
    // Flood the background from every border voxel; whatever it cannot reach is a hole.
    std::vector<std::uint8_t> outside(mask.size(), 0);
    std::vector<std::size_t> queue;
    auto push = [&](std::size_t i) {
        if (mask[i] == 0 && outside[i] == 0) {
            outside[i] = 1;
            queue.push_back(i);
        }
    };
    for (std::int64_t z = 0; z < d[2]; ++z) {
        for (std::int64_t y = 0; y < d[1]; ++y) {
            for (std::int64_t x = 0; x < d[0]; ++x) {
                if (x == 0 || y == 0 || z == 0 || x == d[0] - 1 || y == d[1] - 1 || z == d[2] - 1) {
                    push(mask.linear(x, y, z));
                }
            }
        }
    }
    for (std::size_t head = 0; head < queue.size(); ++head) {
        for_each_neighbor6(g, queue[head], push);
    }
    BinaryMask out(g, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        out[i] = outside[i] == 0 ? 1 : 0;
    }
    return out;
}

BinaryMask largest_component(const BinaryMask& mask) {
    const Components comps = label_components(mask);
    BinaryMask out(mask.geometry(), 0);
    if (comps.count() == 0) {
        return out;
    }
    const auto best = static_cast<std::int32_t>(
        std::max_element(comps.sizes.begin(), comps.sizes.end()) - comps.sizes.begin() + 1);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        out[i] = comps.labels[i] == best ? 1 : 0;
    }
    return out;
}

BinaryMask morphology(const BinaryMask& mask, MorphOp op, int radius) {
    radius = std::max(radius, 0);
    switch (op) {
        case MorphOp::erode: return erode(mask, radius);
        case MorphOp::dilate: return dilate(mask, radius);
        case MorphOp::open: return dilate(erode(mask, radius), radius);
        case MorphOp::close: return erode(dilate(mask, radius), radius);
        case MorphOp::fill_holes: return fill_holes(mask);
        case MorphOp::largest_component: return largest_component(mask);
    }
    return mask;
}

}  // namespace bcseg
