#include "bcseg/session.hpp"

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"

namespace bcseg {

namespace {

std::vector<std::uint32_t> cube_dims(const Geometry& g, std::uint32_t leading) {
    return {leading, static_cast<std::uint32_t>(g.dims[0]), static_cast<std::uint32_t>(g.dims[1]),
            static_cast<std::uint32_t>(g.dims[2])};
}

std::uint8_t channel_of(std::uint8_t label, const HelloMode& mode) noexcept {
    if (!mode.target) {
        return label;
    }
    return label == code(*mode.target) ? 1 : 0;
}

}  // namespace

protocol::Hello make_hello(const HelloMode& mode, std::uint32_t patch_side) {
    nlohmann::json meta = {{"mode", mode.target ? "separate" : "joint"}};
    if (mode.target) {
        meta["class"] = class_name(*mode.target);
    }
    return protocol::Hello{mode.class_count(), patch_side, meta.dump()};
}

HelloMode parse_hello_mode(const protocol::Hello& hello) {
    HelloMode mode;
    if (hello.metadata.empty()) {
        if (hello.class_count != kClassCount) {
            throw DataError("hello: separate mode requires a class in the metadata");
        }
        return mode;
    }
    const auto meta = nlohmann::json::parse(hello.metadata, nullptr, false);
    if (meta.is_discarded() || !meta.is_object()) {
        throw DataError("hello: metadata is not a JSON object");
    }
    const std::string m = meta.value("mode", std::string(hello.class_count == 2 ? "separate" : "joint"));
    if (m == "separate") {
        if (!meta.contains("class") || !meta["class"].is_string()) {
            throw DataError("hello: separate mode requires a class");
        }
        mode.target = parse_class(meta["class"].get<std::string>());
        if (*mode.target == ClassId::background) {
            throw DataError("hello: separate mode needs a tissue class");
        }
    } else if (m != "joint") {
        throw DataError("hello: unknown mode '" + m + "'");
    }
    return mode;
}

protocol::TensorF32 normalized_tensor(const Volume& patch) {
    protocol::TensorF32 t;
    t.dims = cube_dims(patch.geometry(), 1);
    t.data.resize(patch.size());
    for (std::size_t i = 0; i < patch.size(); ++i) {
        t.data[i] = protocol::normalize_hu(patch[i]);
    }
    return t;
}

protocol::TensorF32 onehot_probabilities(const LabelMask& labels, const HelloMode& mode) {
    protocol::TensorF32 t;
    t.dims = cube_dims(labels.geometry(), mode.class_count());
    const std::size_t n = labels.size();
    t.data.assign(n * mode.class_count(), 0.0F);
    for (std::size_t i = 0; i < n; ++i) {
        t.data[channel_of(labels[i], mode) * n + i] = 1.0F;
    }
    return t;
}

protocol::TensorU8 onehot_labels(const LabelMask& labels, const HelloMode& mode) {
    protocol::TensorU8 t;
    t.dims = cube_dims(labels.geometry(), mode.class_count());
    const std::size_t n = labels.size();
    t.data.assign(n * mode.class_count(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        t.data[channel_of(labels[i], mode) * n + i] = 1;
    }
    return t;
}

LabelMask patch_labels(const protocol::TensorF32& probs, const HelloMode& mode, const Geometry& geometry) {
    LabelMask out(geometry, 0);
    const std::size_t n = out.size();
    const std::size_t channels = mode.class_count();
    if (probs.data.size() != n * channels) {
        throw DataError("patch_labels: probability tensor does not match the patch");
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < channels; ++c) {
            if (probs.data[c * n + i] > probs.data[best * n + i]) {
                best = c;
            }
        }
        if (mode.target) {
            out[i] = best == 1 ? code(*mode.target) : 0;
        } else {
            out[i] = static_cast<std::uint8_t>(best);
        }
    }
    return out;
}

}  // namespace bcseg
