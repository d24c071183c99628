#include "bcseg/threshold_backend.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "bcseg/error.hpp"
#include "bcseg/training.hpp"

namespace bcseg {

namespace proto = protocol;

namespace {

Geometry cube_geometry(const std::vector<std::uint32_t>& dims, std::size_t first) {
    Geometry g;
    g.dims = {dims[first], dims[first + 1], dims[first + 2]};
    g.spacing = {1.0, 1.0, 1.0};
    g.origin = {0.0, 0.0, 0.0};
    return g;
}

}  // namespace

LabelMask ThresholdBackend::segment(const proto::TensorF32& image) const {
    if (image.dims.size() != 4 || image.dims[0] != 1) {
        throw DataError("threshold backend: image must be 1 x S^3");
    }
    const Geometry g = cube_geometry(image.dims, 1);
    Volume hu(g, 0.0F);
    for (std::size_t i = 0; i < hu.size(); ++i) {
        hu[i] = proto::denormalize_hu(image.data[i]);
    }
    try {
        return threshold_segment(hu, windows_);
    } catch (const EmptyBodyError&) {
        return LabelMask(g, code(ClassId::background));
    }
}

std::optional<proto::Message> ThresholdBackend::handle(const proto::Message& request) {
    if (const auto* hello = std::get_if<proto::Hello>(&request)) {
        try {
            mode_ = parse_hello_mode(*hello);
        } catch (const Error&) {
            mode_ = HelloMode{};
        }
        greeted_ = true;
        nlohmann::json meta = {{"name", "builtin-threshold"}, {"parameter_count", 0}};
        return proto::Hello{mode_.class_count(), hello->patch_side, meta.dump()};
    }
    if (!greeted_) {
        throw BackendError("threshold backend: request before Hello");
    }
    if (const auto* infer = std::get_if<proto::InferRequest>(&request)) {
        return proto::InferResponse{onehot_probabilities(segment(infer->image), mode_)};
    }
    if (const auto* batch = std::get_if<proto::TrainBatch>(&request)) {
        const auto& dims = batch->images.dims;
        const std::size_t voxels = static_cast<std::size_t>(dims[2]) * dims[3] * dims[4];
        if (batch->onehot.dims[1] != mode_.class_count()) {
            throw DataError("threshold backend: one-hot channel count does not match the session");
        }
        double total = 0.0;
        for (std::uint32_t b = 0; b < dims[0]; ++b) {
            proto::TensorF32 image;
            image.dims = {1, dims[2], dims[3], dims[4]};
            image.data.assign(batch->images.data.begin() + static_cast<std::ptrdiff_t>(b * voxels),
                              batch->images.data.begin() + static_cast<std::ptrdiff_t>((b + 1) * voxels));
            const auto probs = onehot_probabilities(segment(image), mode_);
            const std::size_t stride = voxels * mode_.class_count();
            total += soft_dice_loss(probs.data,
                                    std::span(batch->onehot.data).subspan(b * stride, stride),
                                    mode_.class_count());
        }
        ++steps_;
        return proto::TrainResult{dims[0] == 0 ? 0.0 : total / dims[0]};
    }
    if (const auto* lr = std::get_if<proto::SetLearningRate>(&request)) {
        lr_ = lr->lr;
        return proto::Metrics{{{"lr", lr_}}};
    }
    if (const auto* ckpt = std::get_if<proto::SaveCheckpoint>(&request)) {
        if (!ckpt->path.empty()) {
            std::ofstream out(ckpt->path, std::ios::binary | std::ios::trunc);
            nlohmann::json state = {{"backend", "builtin-threshold"},
                                    {"class_count", mode_.class_count()},
                                    {"lr", lr_},
                                    {"steps", steps_}};
            out << state.dump() << '\n';
            if (!out) {
                throw BackendError("threshold backend: cannot write checkpoint " + ckpt->path);
            }
        }
        return proto::Metrics{{{"saved", 1.0}}};
    }
    if (std::holds_alternative<proto::Shutdown>(request)) {
        return std::nullopt;
    }
    throw BackendError("threshold backend: unexpected " + std::string(proto::msg_type_name(proto::type_of(request))));
}

}  // namespace bcseg
