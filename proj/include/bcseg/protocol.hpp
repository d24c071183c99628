#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace bcseg::protocol {

inline constexpr char kMagic[4] = {'B', 'C', 'S', 'P'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 20;
inline constexpr std::uint64_t kMaxPayload = std::uint64_t{1} << 30;
inline constexpr std::size_t kMaxRank = 8;

enum class MsgType : std::uint32_t {
    hello = 1,
    train_batch = 2,
    train_result = 3,
    infer_request = 4,
    infer_response = 5,
    set_learning_rate = 6,
    save_checkpoint = 7,
    metrics = 8,
    shutdown = 9,
};

[[nodiscard]] std::string_view msg_type_name(MsgType t) noexcept;

enum class DType : std::uint8_t { f32 = 1, u8 = 2 };

template <typename T>
struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<T> data;

    [[nodiscard]] std::size_t element_count() const noexcept {
        std::size_t n = 1;
        for (auto d : dims) {
            n *= d;
        }
        return n;
    }
    bool operator==(const Tensor&) const = default;
};

using TensorF32 = Tensor<float>;
using TensorU8 = Tensor<std::uint8_t>;

/// Sent by the orchestrator to open a session and echoed back by the backend.
/// `metadata` is a JSON object: mode/class on the request, name/parameter_count on the reply.
struct Hello {
    std::uint32_t class_count = 0;
    std::uint32_t patch_side = 0;
    std::string metadata;
    bool operator==(const Hello&) const = default;
};

/// images B x 1 x S^3 (normalized), onehot B x C x S^3.
struct TrainBatch {
    TensorF32 images;
    TensorU8 onehot;
    bool operator==(const TrainBatch&) const = default;
};

struct TrainResult {
    double loss = 0.0;
    bool operator==(const TrainResult&) const = default;
};

/// image 1 x S^3 (normalized).
struct InferRequest {
    TensorF32 image;
    bool operator==(const InferRequest&) const = default;
};

/// probs C x S^3.
struct InferResponse {
    TensorF32 probs;
    bool operator==(const InferResponse&) const = default;
};

struct SetLearningRate {
    double lr = 0.0;
    bool operator==(const SetLearningRate&) const = default;
};

struct SaveCheckpoint {
    std::string path;
    bool operator==(const SaveCheckpoint&) const = default;
};

/// Key/value report; also the acknowledgement of SetLearningRate and SaveCheckpoint.
struct Metrics {
    std::vector<std::pair<std::string, double>> values;
    bool operator==(const Metrics&) const = default;
};

struct Shutdown {
    bool operator==(const Shutdown&) const = default;
};

using Message = std::variant<Hello, TrainBatch, TrainResult, InferRequest, InferResponse, SetLearningRate,
                             SaveCheckpoint, Metrics, Shutdown>;

[[nodiscard]] MsgType type_of(const Message& m) noexcept;

enum class DecodeError {
    bad_magic,
    version_mismatch,
    truncated,
    dims_payload_mismatch,
    unknown_msg_type,
    payload_too_large,
    malformed_payload,
};

[[nodiscard]] std::string_view decode_error_name(DecodeError e) noexcept;

using DecodeResult = std::variant<Message, DecodeError>;

[[nodiscard]] std::vector<std::uint8_t> encode(const Message& m);

/// Decodes exactly one frame. Trailing bytes after the payload are malformed.
[[nodiscard]] DecodeResult decode(std::span<const std::uint8_t> bytes);

struct FrameHeader {
    std::uint32_t version = 0;
    std::uint32_t msg_type = 0;
    std::uint64_t payload_len = 0;
};

/// Validates magic, version and the payload cap of a 20-byte header.
[[nodiscard]] std::variant<FrameHeader, DecodeError> parse_header(std::span<const std::uint8_t> header);

/// Clamps HU to [-1024, 1024] and maps linearly onto [-1, 1].
[[nodiscard]] float normalize_hu(float hu) noexcept;
[[nodiscard]] float denormalize_hu(float value) noexcept;

}  // namespace bcseg::protocol
