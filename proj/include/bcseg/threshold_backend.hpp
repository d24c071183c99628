#pragma once

#include <optional>
#include <string>

#include "bcseg/backend.hpp"
#include "bcseg/session.hpp"
#include "bcseg/threshold_segmenter.hpp"
#include "bcseg/volume.hpp"

namespace bcseg {

/// Built-in backend: segments each patch in isolation with threshold_segment
/// and answers with one-hot probabilities. Training requests are scored but
/// leave it unchanged, so it is fully deterministic.
class ThresholdBackend final : public BackendServer {
public:
    explicit ThresholdBackend(HuWindows windows = {}) : windows_(windows) {}

    std::optional<protocol::Message> handle(const protocol::Message& request) override;

    /// Denormalizes a 1 x S^3 tensor and segments it; an empty body is all background.
    [[nodiscard]] LabelMask segment(const protocol::TensorF32& image) const;

private:
    HuWindows windows_;
    HelloMode mode_;
    bool greeted_ = false;
    double lr_ = 0.0;
    std::uint64_t steps_ = 0;
};

}  // namespace bcseg
