#include "bcseg/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <optional>

namespace bcseg::protocol {

static_assert(std::endian::native == std::endian::little, "the wire codec assumes a little-endian host");

std::string_view msg_type_name(MsgType t) noexcept {
    switch (t) {
        case MsgType::hello: return "Hello";
        case MsgType::train_batch: return "TrainBatch";
        case MsgType::train_result: return "TrainResult";
        case MsgType::infer_request: return "InferRequest";
        case MsgType::infer_response: return "InferResponse";
        case MsgType::set_learning_rate: return "SetLearningRate";
        case MsgType::save_checkpoint: return "SaveCheckpoint";
        case MsgType::metrics: return "Metrics";
        case MsgType::shutdown: return "Shutdown";
    }
    return "?";
}

std::string_view decode_error_name(DecodeError e) noexcept {
    switch (e) {
        case DecodeError::bad_magic: return "bad_magic";
        case DecodeError::version_mismatch: return "version_mismatch";
        case DecodeError::truncated: return "truncated";
        case DecodeError::dims_payload_mismatch: return "dims_payload_mismatch";
        case DecodeError::unknown_msg_type: return "unknown_msg_type";
        case DecodeError::payload_too_large: return "payload_too_large";
        case DecodeError::malformed_payload: return "malformed_payload";
    }
    return "?";
}

MsgType type_of(const Message& m) noexcept {
    return static_cast<MsgType>(m.index() + 1);
}

float normalize_hu(float hu) noexcept {
    return std::clamp(hu, -1024.0f, 1024.0f) / 1024.0f;
}

float denormalize_hu(float value) noexcept {
    return value * 1024.0f;
}

namespace {

class Writer {
public:
    template <typename T>
    void put(T v) {
        const auto at = out_.size();
        out_.resize(at + sizeof(T));
        std::memcpy(out_.data() + at, &v, sizeof(T));
    }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void string32(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    template <typename T>
    void tensor(const Tensor<T>& t) {
        put(static_cast<std::uint8_t>(std::is_same_v<T, float> ? DType::f32 : DType::u8));
        put(static_cast<std::uint8_t>(t.dims.size()));
        for (auto d : t.dims) {
            put(d);
        }
        bytes(t.data.data(), t.data.size() * sizeof(T));
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

void encode_payload(Writer& w, const Hello& m) {
    w.put(m.class_count);
    w.put(m.patch_side);
    w.string32(m.metadata);
}
void encode_payload(Writer& w, const TrainBatch& m) {
    w.tensor(m.images);
    w.tensor(m.onehot);
}
void encode_payload(Writer& w, const TrainResult& m) { w.put(m.loss); }
void encode_payload(Writer& w, const InferRequest& m) { w.tensor(m.image); }
void encode_payload(Writer& w, const InferResponse& m) { w.tensor(m.probs); }
void encode_payload(Writer& w, const SetLearningRate& m) { w.put(m.lr); }
void encode_payload(Writer& w, const SaveCheckpoint& m) { w.string32(m.path); }
void encode_payload(Writer& w, const Metrics& m) {
    w.put(static_cast<std::uint32_t>(m.values.size()));
    for (const auto& [k, v] : m.values) {
        w.string32(k);
        w.put(v);
    }
}
void encode_payload(Writer&, const Shutdown&) {}

// Payload reader. Any failure latches an error; later reads return zeros.
class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    template <typename T>
    T get() {
        T v{};
        if (!need(sizeof(T))) {
            return v;
        }
        std::memcpy(&v, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string string32() {
        const auto n = get<std::uint32_t>();
        if (!need(n)) {
            return {};
        }
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    template <typename T>
    Tensor<T> tensor() {
        Tensor<T> t;
        const auto dtype = get<std::uint8_t>();
        const auto rank = get<std::uint8_t>();
        if (failed()) {
            return t;
        }
        const auto want = static_cast<std::uint8_t>(std::is_same_v<T, float> ? DType::f32 : DType::u8);
        if (dtype != want || rank == 0 || rank > kMaxRank) {
            fail(DecodeError::malformed_payload);
            return t;
        }
        std::uint64_t count = 1;
        for (std::uint8_t i = 0; i < rank; ++i) {
            const auto d = get<std::uint32_t>();
            if (failed()) {
                return t;
            }
            t.dims.push_back(d);
            // Saturate: any count beyond the payload cap is a mismatch anyway.
            count = (d != 0 && count > kMaxPayload / d) ? kMaxPayload + 1 : count * d;
        }
        const std::uint64_t remaining = in_.size() - pos_;
        if (count > kMaxPayload || count * sizeof(T) > remaining) {
            fail(DecodeError::dims_payload_mismatch);
            return t;
        }
        t.data.resize(static_cast<std::size_t>(count));
        std::memcpy(t.data.data(), in_.data() + pos_, static_cast<std::size_t>(count) * sizeof(T));
        pos_ += static_cast<std::size_t>(count) * sizeof(T);
        return t;
    }

    [[nodiscard]] bool failed() const noexcept { return error_.has_value(); }
    [[nodiscard]] bool at_end() const noexcept { return pos_ == in_.size(); }
    [[nodiscard]] std::optional<DecodeError> error() const noexcept { return error_; }
    void fail(DecodeError e) {
        if (!error_) {
            error_ = e;
        }
    }

private:
    bool need(std::uint64_t n) {
        if (failed()) {
            return false;
        }
        if (in_.size() - pos_ < n) {
            fail(DecodeError::malformed_payload);
            return false;
        }
        return true;
    }

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
    std::optional<DecodeError> error_;
};

std::optional<Message> decode_payload(MsgType type, Reader& r) {
    switch (type) {
        case MsgType::hello: {
            Hello m;
            m.class_count = r.get<std::uint32_t>();
            m.patch_side = r.get<std::uint32_t>();
            m.metadata = r.string32();
            return m;
        }
        case MsgType::train_batch: {
            TrainBatch m;
            m.images = r.tensor<float>();
            m.onehot = r.tensor<std::uint8_t>();
            if (r.failed()) {
                return std::nullopt;
            }
            const auto& a = m.images.dims;
            const auto& b = m.onehot.dims;
            if (a.size() != 5 || b.size() != 5 || a[1] != 1 || a[0] != b[0] ||
                !std::equal(a.begin() + 2, a.end(), b.begin() + 2)) {
                r.fail(DecodeError::malformed_payload);
            }
            return m;
        }
        case MsgType::train_result: return TrainResult{r.get<double>()};
        case MsgType::infer_request: {
            InferRequest m{r.tensor<float>()};
            if (!r.failed() && (m.image.dims.size() != 4 || m.image.dims[0] != 1)) {
                r.fail(DecodeError::malformed_payload);
            }
            return m;
        }
        case MsgType::infer_response: {
            InferResponse m{r.tensor<float>()};
            if (!r.failed() && m.probs.dims.size() != 4) {
                r.fail(DecodeError::malformed_payload);
            }
            return m;
        }
        case MsgType::set_learning_rate: return SetLearningRate{r.get<double>()};
        case MsgType::save_checkpoint: return SaveCheckpoint{r.string32()};
        case MsgType::metrics: {
            Metrics m;
            const auto n = r.get<std::uint32_t>();
            // n is untrusted: no reserve, entries stop at the first short read.
            for (std::uint32_t i = 0; i < n && !r.failed(); ++i) {
                auto key = r.string32();
                const auto v = r.get<double>();
                m.values.emplace_back(std::move(key), v);
            }
            return m;
        }
        case MsgType::shutdown: return Shutdown{};
    }
    return std::nullopt;
}

}  // namespace

std::vector<std::uint8_t> encode(const Message& m) {
    Writer payload;
    std::visit([&](const auto& msg) { encode_payload(payload, msg); }, m);
    auto body = payload.take();
    Writer frame;
    frame.bytes(kMagic, 4);
    frame.put(kVersion);
    frame.put(static_cast<std::uint32_t>(type_of(m)));
    frame.put(static_cast<std::uint64_t>(body.size()));
    auto out = frame.take();
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

std::variant<FrameHeader, DecodeError> parse_header(std::span<const std::uint8_t> header) {
    if (header.size() < kHeaderSize) {
        return DecodeError::truncated;
    }
    if (std::memcmp(header.data(), kMagic, 4) != 0) {
        return DecodeError::bad_magic;
    }
    FrameHeader h;
    std::memcpy(&h.version, header.data() + 4, 4);
    std::memcpy(&h.msg_type, header.data() + 8, 4);
    std::memcpy(&h.payload_len, header.data() + 12, 8);
    if (h.version != kVersion) {
        return DecodeError::version_mismatch;
    }
    if (h.payload_len > kMaxPayload) {
        return DecodeError::payload_too_large;
    }
    return h;
}

DecodeResult decode(std::span<const std::uint8_t> bytes) {
    auto parsed = parse_header(bytes);
    if (auto* e = std::get_if<DecodeError>(&parsed)) {
        return *e;
    }
    const auto h = std::get<FrameHeader>(parsed);
    if (bytes.size() - kHeaderSize < h.payload_len) {
        return DecodeError::truncated;
    }
    if (bytes.size() - kHeaderSize > h.payload_len) {
        return DecodeError::malformed_payload;
    }
    if (h.msg_type < 1 || h.msg_type > 9) {
        return DecodeError::unknown_msg_type;
    }
    Reader r(bytes.subspan(kHeaderSize));
    auto m = decode_payload(static_cast<MsgType>(h.msg_type), r);
    if (r.failed()) {
        return *r.error();
    }
    if (!m || !r.at_end()) {
        return DecodeError::malformed_payload;
    }
    return std::move(*m);
}

}  // namespace bcseg::protocol
