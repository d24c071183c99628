#include "bcseg/transcript.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "bcseg/error.hpp"
#include "bcseg/session.hpp"

namespace bcseg::transcript {

namespace proto = protocol;

namespace {

std::string hex_word(std::span<const std::uint8_t> word) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    for (auto b : word) {
        out += kDigits[b >> 4];
        out += kDigits[b & 0xF];
    }
    return out;
}

int hex_value(char ch) {
    if (ch >= '0' && ch <= '9') {
        return ch - '0';
    }
    if (ch >= 'a' && ch <= 'f') {
        return ch - 'a' + 10;
    }
    if (ch >= 'A' && ch <= 'F') {
        return ch - 'A' + 10;
    }
    return -1;
}

// Shape signature of a frame: type plus tensor dims, or the decode error.
std::string signature(std::span<const std::uint8_t> frame) {
    auto decoded = proto::decode(frame);
    if (auto* e = std::get_if<proto::DecodeError>(&decoded)) {
        return "error:" + std::string(proto::decode_error_name(*e));
    }
    const auto& m = std::get<proto::Message>(decoded);
    std::string sig(proto::msg_type_name(proto::type_of(m)));
    auto dims = [&](const std::vector<std::uint32_t>& d) {
        sig += " [";
        for (std::size_t i = 0; i < d.size(); ++i) {
            sig += (i ? "x" : "") + std::to_string(d[i]);
        }
        sig += "]";
    };
    if (const auto* r = std::get_if<proto::InferResponse>(&m)) {
        dims(r->probs.dims);
    } else if (const auto* h = std::get_if<proto::Hello>(&m)) {
        sig += " " + std::to_string(h->class_count) + "/" + std::to_string(h->patch_side);
    }
    return sig;
}

}  // namespace

std::string encode_hex(std::span<const std::uint8_t> bytes) {
    std::string out;
    std::size_t i = 0;
    while (i < bytes.size()) {
        const std::size_t len = std::min<std::size_t>(4, bytes.size() - i);
        const auto word = bytes.subspan(i, len);
        std::size_t run = 1;
        if (len == 4) {
            while (i + (run + 1) * 4 <= bytes.size() &&
                   std::equal(word.begin(), word.end(), bytes.begin() + static_cast<std::ptrdiff_t>(i + run * 4))) {
                ++run;
            }
        }
        if (!out.empty()) {
            out += ' ';
        }
        out += hex_word(word);
        if (run > 1) {
            out += '*' + std::to_string(run);
        }
        i += len * run;
    }
    return out;
}

std::vector<std::uint8_t> decode_hex(std::string_view text) {
    std::vector<std::uint8_t> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && text[pos] == ' ') {
            ++pos;
        }
        if (pos >= text.size()) {
            break;
        }
        std::size_t end = text.find(' ', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view token = text.substr(pos, end - pos);
        pos = end;
        std::size_t repeat = 1;
        if (const auto star = token.find('*'); star != std::string_view::npos) {
            const auto count = token.substr(star + 1);
            const auto [ptr, ec] = std::from_chars(count.data(), count.data() + count.size(), repeat);
            if (ec != std::errc{} || ptr != count.data() + count.size() || repeat == 0) {
                throw DataError("transcript: bad repeat count in '" + std::string(token) + "'");
            }
            token = token.substr(0, star);
        }
        if (token.empty() || token.size() % 2 != 0 || token.size() > 8) {
            throw DataError("transcript: bad hex word '" + std::string(token) + "'");
        }
        std::vector<std::uint8_t> word;
        for (std::size_t k = 0; k < token.size(); k += 2) {
            const int hi = hex_value(token[k]);
            const int lo = hex_value(token[k + 1]);
            if (hi < 0 || lo < 0) {
                throw DataError("transcript: bad hex word '" + std::string(token) + "'");
            }
            word.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
        }
        for (std::size_t r = 0; r < repeat; ++r) {
            out.insert(out.end(), word.begin(), word.end());
        }
    }
    return out;
}

std::string format(std::span<const Entry> entries, std::string_view comment) {
    std::string out;
    if (!comment.empty()) {
        std::istringstream lines{std::string(comment)};
        for (std::string line; std::getline(lines, line);) {
            out += "# " + line + "\n";
        }
    }
    for (const auto& e : entries) {
        out += e.direction == Direction::request ? "> " : "< ";
        out += encode_hex(e.frame);
        out += '\n';
    }
    return out;
}

std::vector<Entry> parse(std::string_view text) {
    std::vector<Entry> entries;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.empty() || line[0] == '#') {
            continue;
        }
        if (line.size() < 2 || (line[0] != '>' && line[0] != '<') || line[1] != ' ') {
            throw DataError("transcript: line " + std::to_string(line_no) + ": expected '> ' or '< '");
        }
        entries.push_back({line[0] == '>' ? Direction::request : Direction::reply, decode_hex(line.substr(2))});
    }
    return entries;
}

std::vector<Entry> record(BackendServer& server, std::span<const proto::Message> requests) {
    std::vector<Entry> entries;
    for (const auto& m : requests) {
        entries.push_back({Direction::request, proto::encode(m)});
        if (auto reply = server.handle(m)) {
            entries.push_back({Direction::reply, proto::encode(*reply)});
        }
    }
    return entries;
}

std::vector<std::string> replay(std::span<const Entry> entries, Transport& transport, Match match) {
    std::vector<std::string> problems;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.direction == Direction::reply) {
            problems.push_back("entry " + std::to_string(i) + ": reply without a request");
            continue;
        }
        try {
            transport.send(e.frame);
        } catch (const Error& err) {
            problems.push_back("entry " + std::to_string(i) + ": " + err.what());
            return problems;
        }
        if (i + 1 >= entries.size() || entries[i + 1].direction != Direction::reply) {
            continue;  // no reply expected (Shutdown)
        }
        const auto& expected = entries[++i].frame;
        std::vector<std::uint8_t> got;
        try {
            got = transport.receive(std::chrono::seconds(30));
        } catch (const Error& err) {
            problems.push_back("entry " + std::to_string(i) + ": " + err.what());
            return problems;
        }
        const bool ok = match == Match::exact ? got == expected : signature(got) == signature(expected);
        if (!ok) {
            problems.push_back("entry " + std::to_string(i) + ": expected " + signature(expected) + ", got " +
                               signature(got) + (match == Match::exact ? " (bytes differ)" : ""));
        }
    }
    return problems;
}

std::vector<proto::Message> reference_requests(std::uint32_t patch_side) {
    const Geometry g{{patch_side, patch_side, patch_side}, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}};
    const Volume air(g, kPadHu);
    const Volume dense(g, 700.0F);
    const HelloMode joint;

    proto::TrainBatch batch;
    const auto image = normalized_tensor(dense);
    batch.images = image;
    batch.images.dims.insert(batch.images.dims.begin(), 1);
    batch.onehot = onehot_labels(LabelMask(g, code(ClassId::bone)), joint);
    batch.onehot.dims.insert(batch.onehot.dims.begin(), 1);

    return {make_hello(joint, patch_side),
            proto::InferRequest{normalized_tensor(air)},
            proto::InferRequest{image},
            batch,
            proto::SetLearningRate{5e-5},
            proto::Shutdown{}};
}

}  // namespace bcseg::transcript
