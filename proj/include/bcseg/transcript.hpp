#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bcseg/backend.hpp"
#include "bcseg/protocol.hpp"

namespace bcseg::transcript {

/// Text format, one frame per line:
///   "> " request frame (orchestrator to backend)
///   "< " reply frame (backend to orchestrator)
///   "#"  comment
/// Frame bytes are hex in 4-byte words separated by spaces; a run of N equal
/// words is written once as "word*N". A short final word carries the tail.
enum class Direction { request, reply };

struct Entry {
    Direction direction;
    std::vector<std::uint8_t> frame;
};

[[nodiscard]] std::string encode_hex(std::span<const std::uint8_t> bytes);
/// Throws DataError on malformed text.
[[nodiscard]] std::vector<std::uint8_t> decode_hex(std::string_view text);

[[nodiscard]] std::string format(std::span<const Entry> entries, std::string_view comment = {});
[[nodiscard]] std::vector<Entry> parse(std::string_view text);

/// Feeds `requests` to `server` and records both directions.
[[nodiscard]] std::vector<Entry> record(BackendServer& server, std::span<const protocol::Message> requests);

enum class Match {
    /// Replies must be byte-identical.
    exact,
    /// Replies must carry the same message type and tensor shapes.
    shape,
};

/// Replays the requests through `transport` and compares each reply with the
/// recorded one. Returns one line per discrepancy; empty means conformant.
[[nodiscard]] std::vector<std::string> replay(std::span<const Entry> entries, Transport& transport, Match match);

/// Standard conversation used for the built-in backend's golden file.
[[nodiscard]] std::vector<protocol::Message> reference_requests(std::uint32_t patch_side = 80);

}  // namespace bcseg::transcript
