#include <gtest/gtest.h>

#include <cstring>

#include "bcseg/protocol.hpp"
#include "bcseg/rng.hpp"
#include "unit/test_support.hpp"

namespace bcseg::protocol {
namespace {

using Bytes = std::vector<std::uint8_t>;

std::optional<DecodeError> error_of(const Bytes& b) {
    const auto r = decode(b);
    if (const auto* e = std::get_if<DecodeError>(&r)) return *e;
    return std::nullopt;
}

void put_u32(Bytes& b, std::size_t at, std::uint32_t v) { std::memcpy(b.data() + at, &v, 4); }
void put_u64(Bytes& b, std::size_t at, std::uint64_t v) { std::memcpy(b.data() + at, &v, 8); }

TEST(Protocol, ShutdownFrameIsHeaderOnly) {
    const Bytes b = encode(Shutdown{});
    const Bytes want = {'B', 'C', 'S', 'P', 1, 0, 0, 0, 9, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    EXPECT_EQ(b, want);
    EXPECT_EQ(std::get<Message>(decode(b)), Message{Shutdown{}});
}

TEST(Protocol, SetLearningRateLayout) {
    const Bytes b = encode(SetLearningRate{0.5});
    ASSERT_EQ(b.size(), 28u);
    EXPECT_EQ(b[8], 6);
    EXPECT_EQ(b[12], 8);
    double v = 0;
    std::memcpy(&v, b.data() + 20, 8);
    EXPECT_EQ(v, 0.5);
}

TEST(Protocol, InferRequestTensorLayout) {
    InferRequest m{TensorF32{{1, 2, 1, 1}, {0.25F, -1.0F}}};
    const Bytes b = encode(m);
    // dtype, rank, 4 dims, 2 floats
    ASSERT_EQ(b.size(), 20u + 2u + 16u + 8u);
    EXPECT_EQ(b[20], 1);
    EXPECT_EQ(b[21], 4);
    EXPECT_EQ(b[26], 2);
    EXPECT_EQ(std::get<Message>(decode(b)), Message{m});
}

TEST(Protocol, BadMagic) {
    Bytes b = encode(Shutdown{});
    std::memcpy(b.data(), "XXXX", 4);
    EXPECT_EQ(error_of(b), DecodeError::bad_magic);
}

TEST(Protocol, VersionMismatch) {
    Bytes b = encode(Shutdown{});
    put_u32(b, 4, 2);
    EXPECT_EQ(error_of(b), DecodeError::version_mismatch);
}

TEST(Protocol, Truncated) {
    Bytes b = encode(SetLearningRate{1.0});
    EXPECT_EQ(error_of(Bytes(b.begin(), b.begin() + 10)), DecodeError::truncated);
    b.pop_back();
    EXPECT_EQ(error_of(b), DecodeError::truncated);
}

TEST(Protocol, UnknownMessageType) {
    Bytes b = encode(Shutdown{});
    put_u32(b, 8, 42);
    EXPECT_EQ(error_of(b), DecodeError::unknown_msg_type);
    put_u32(b, 8, 0);
    EXPECT_EQ(error_of(b), DecodeError::unknown_msg_type);
}

TEST(Protocol, PayloadTooLarge) {
    Bytes b = encode(Shutdown{});
    put_u64(b, 12, kMaxPayload + 1);
    EXPECT_EQ(error_of(b), DecodeError::payload_too_large);
    const auto h = parse_header(b);
    EXPECT_EQ(std::get<DecodeError>(h), DecodeError::payload_too_large);
}

TEST(Protocol, DimsPayloadMismatch) {
    Bytes b = encode(InferRequest{TensorF32{{1, 2, 1, 1}, {0.0F, 0.0F}}});
    put_u32(b, 26, 3);  // claims 3 elements, carries 2
    EXPECT_EQ(error_of(b), DecodeError::dims_payload_mismatch);
    put_u32(b, 26, 0xFFFFFFFFu);
    EXPECT_EQ(error_of(b), DecodeError::dims_payload_mismatch);
}

TEST(Protocol, MalformedPayloads) {
    // Trailing byte after a complete frame.
    Bytes b = encode(Shutdown{});
    b.push_back(0);
    EXPECT_EQ(error_of(b), DecodeError::malformed_payload);
    // Payload longer than the message needs.
    b = encode(SetLearningRate{1.0});
    b.push_back(0);
    put_u64(b, 12, 9);
    EXPECT_EQ(error_of(b), DecodeError::malformed_payload);
    // Wrong dtype.
    b = encode(InferRequest{TensorF32{{1, 1, 1, 1}, {0.0F}}});
    b[20] = 2;
    EXPECT_EQ(error_of(b), DecodeError::malformed_payload);
    // Rank zero.
    b[20] = 1;
    b[21] = 0;
    EXPECT_EQ(error_of(b), DecodeError::malformed_payload);
    // Wrong rank for the message.
    EXPECT_EQ(error_of(encode(InferRequest{TensorF32{{1, 1, 1}, {0.0F}}})), DecodeError::malformed_payload);
    EXPECT_EQ(error_of(encode(InferRequest{TensorF32{{2, 1, 1, 1}, {0.0F, 0.0F}}})),
              DecodeError::malformed_payload);
    // Train batch whose label grid disagrees with the image grid.
    TrainBatch tb{TensorF32{{1, 1, 2, 1, 1}, {0.0F, 0.0F}}, TensorU8{{1, 2, 1, 1, 1}, {1, 0}}};
    EXPECT_EQ(error_of(encode(tb)), DecodeError::malformed_payload);
    // String length past the payload.
    b = encode(SaveCheckpoint{"abc"});
    put_u32(b, 20, 100);
    EXPECT_EQ(error_of(b), DecodeError::malformed_payload);
}

TEST(Protocol, RandomRoundTrips) {
    Rng rng(17);
    for (int i = 0; i < 1000; ++i) {
        const Message m = testing::random_message(rng);
        const Bytes b = encode(m);
        const auto r = decode(b);
        ASSERT_TRUE(std::holds_alternative<Message>(r)) << "iteration " << i;
        ASSERT_EQ(std::get<Message>(r), m);
        ASSERT_EQ(encode(std::get<Message>(r)), b);
    }
}

TEST(Protocol, FuzzNeverCrashes) {
    Rng rng(23);
    int rejected = 0;
    for (int i = 0; i < 3000; ++i) {
        Bytes b = encode(testing::random_message(rng));
        switch (rng.below(3)) {
            case 0:
                for (int k = 0; k < 3; ++k) b[rng.below(b.size())] ^= static_cast<std::uint8_t>(1 + rng.below(255));
                break;
            case 1: b.resize(rng.below(b.size())); break;
            default:
                b.resize(rng.below(64));
                for (auto& x : b) x = static_cast<std::uint8_t>(rng.below(256));
        }
        const auto r = decode(b);
        if (std::holds_alternative<DecodeError>(r)) {
            ++rejected;
        } else {
            // Anything accepted must re-encode to the same bytes.
            ASSERT_EQ(encode(std::get<Message>(r)), b);
        }
    }
    EXPECT_GT(rejected, 2000);
}

TEST(Protocol, NormalizeHu) {
    EXPECT_EQ(normalize_hu(-1024.0F), -1.0F);
    EXPECT_EQ(normalize_hu(0.0F), 0.0F);
    EXPECT_EQ(normalize_hu(3000.0F), 1.0F);
    EXPECT_EQ(normalize_hu(512.0F), 0.5F);
    EXPECT_EQ(normalize_hu(-3000.0F), -1.0F);
    EXPECT_EQ(denormalize_hu(0.5F), 512.0F);
}

TEST(Protocol, Names) {
    EXPECT_EQ(msg_type_name(MsgType::infer_response), "InferResponse");
    EXPECT_EQ(decode_error_name(DecodeError::bad_magic), "bad_magic");
    EXPECT_EQ(type_of(Message{Metrics{}}), MsgType::metrics);
}

}  // namespace
}  // namespace bcseg::protocol
