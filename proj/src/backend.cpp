#include "bcseg/backend.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include "bcseg/error.hpp"
#include "bcseg/threshold_backend.hpp"

extern char** environ;

namespace bcseg {

using namespace std::chrono_literals;
namespace proto = protocol;

namespace {

bool read_fully(int fd, std::uint8_t* out, std::size_t n, bool& eof_at_start) {
    std::size_t got = 0;
    eof_at_start = false;
    while (got < n) {
        const ssize_t r = ::read(fd, out + got, n - got);
        if (r < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        if (r == 0) {
            eof_at_start = got == 0;
            return false;
        }
        got += static_cast<std::size_t>(r);
    }
    return true;
}

bool write_fully(int fd, const std::uint8_t* data, std::size_t n) {
    std::size_t done = 0;
    while (done < n) {
        const ssize_t w = ::write(fd, data + done, n - done);
        if (w < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        done += static_cast<std::size_t>(w);
    }
    return true;
}

}  // namespace

int serve_stream(BackendServer& server, int in_fd, int out_fd) {
    std::vector<std::uint8_t> frame;
    for (;;) {
        frame.assign(proto::kHeaderSize, 0);
        bool eof = false;
        if (!read_fully(in_fd, frame.data(), frame.size(), eof)) {
            return eof ? 0 : 4;
        }
        auto header = proto::parse_header(frame);
        if (std::holds_alternative<proto::DecodeError>(header)) {
            return 4;
        }
        const auto len = static_cast<std::size_t>(std::get<proto::FrameHeader>(header).payload_len);
        frame.resize(proto::kHeaderSize + len);
        if (len > 0 && !read_fully(in_fd, frame.data() + proto::kHeaderSize, len, eof)) {
            return 4;
        }
        auto decoded = proto::decode(frame);
        if (std::holds_alternative<proto::DecodeError>(decoded)) {
            return 4;
        }
        const auto& request = std::get<proto::Message>(decoded);
        std::optional<proto::Message> reply;
        try {
            reply = server.handle(request);
        } catch (const std::exception&) {
            return 4;
        }
        if (reply) {
            const auto bytes = proto::encode(*reply);
            if (!write_fully(out_fd, bytes.data(), bytes.size())) {
                return 4;
            }
        }
        if (std::holds_alternative<proto::Shutdown>(request)) {
            return 0;
        }
    }
}

// --- PipeTransport ---------------------------------------------------------

std::unique_ptr<PipeTransport> PipeTransport::spawn(const std::vector<std::string>& command) {
    if (command.empty()) {
        throw BackendError("spawn: empty backend command");
    }
    // A dead child must surface as EPIPE on write, not kill the orchestrator.
    ::signal(SIGPIPE, SIG_IGN);

    int in_pipe[2];
    int out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) {
        throw BackendError(std::string("spawn: pipe: ") + std::strerror(errno));
    }
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw BackendError(std::string("spawn: pipe: ") + std::strerror(errno));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

    std::vector<char*> argv;
    argv.reserve(command.size() + 1);
    for (const auto& a : command) {
        argv.push_back(const_cast<char*>(a.c_str()));
    }
    argv.push_back(nullptr);

    pid_t pid = -1;
    const int rc = ::posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    if (rc != 0) {
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        throw BackendError("spawn: cannot start '" + command[0] + "': " + std::strerror(rc));
    }
    return std::unique_ptr<PipeTransport>(new PipeTransport(pid, in_pipe[1], out_pipe[0]));
}

PipeTransport::~PipeTransport() {
    close();
}

void PipeTransport::send(std::span<const std::uint8_t> frame) {
    if (to_child_ < 0 || !write_fully(to_child_, frame.data(), frame.size())) {
        throw BackendError("backend: write failed (process exited?)");
    }
}

void PipeTransport::read_exact(std::uint8_t* out, std::size_t n,
                               std::optional<std::chrono::steady_clock::time_point> deadline) {
    std::size_t got = 0;
    while (got < n) {
        int wait_ms = -1;
        if (deadline) {
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline -
                                                                                    std::chrono::steady_clock::now());
            if (left.count() <= 0) {
                throw BackendError("backend: timed out waiting for a reply");
            }
            wait_ms = static_cast<int>(std::min<std::int64_t>(left.count(), 1 << 30));
        }
        pollfd p{from_child_, POLLIN, 0};
        const int pr = ::poll(&p, 1, wait_ms);
        if (pr < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw BackendError(std::string("backend: poll: ") + std::strerror(errno));
        }
        if (pr == 0) {
            continue;  // deadline re-checked above
        }
        const ssize_t r = ::read(from_child_, out + got, n - got);
        if (r < 0) {
            if (errno == EINTR || errno == EAGAIN) {
                continue;
            }
            throw BackendError(std::string("backend: read: ") + std::strerror(errno));
        }
        if (r == 0) {
            throw BackendError("backend: stream closed by the backend process");
        }
        got += static_cast<std::size_t>(r);
    }
}

std::vector<std::uint8_t> PipeTransport::receive(std::optional<std::chrono::milliseconds> timeout) {
    std::optional<std::chrono::steady_clock::time_point> deadline;
    if (timeout) {
        deadline = std::chrono::steady_clock::now() + *timeout;
    }
    std::vector<std::uint8_t> frame(proto::kHeaderSize);
    read_exact(frame.data(), frame.size(), deadline);
    auto header = proto::parse_header(frame);
    if (auto* e = std::get_if<proto::DecodeError>(&header)) {
        throw BackendError("backend: bad frame header (" + std::string(proto::decode_error_name(*e)) + ")");
    }
    const auto len = static_cast<std::size_t>(std::get<proto::FrameHeader>(header).payload_len);
    frame.resize(proto::kHeaderSize + len);
    read_exact(frame.data() + proto::kHeaderSize, len, deadline);
    return frame;
}

void PipeTransport::reap(bool force) noexcept {
    if (pid_ <= 0) {
        return;
    }
    if (!force) {
        for (int i = 0; i < 200; ++i) {
            if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
                pid_ = -1;
                return;
            }
            std::this_thread::sleep_for(10ms);
        }
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
}

void PipeTransport::terminate() noexcept {
    if (to_child_ >= 0) {
        ::close(to_child_);
        to_child_ = -1;
    }
    reap(true);
    if (from_child_ >= 0) {
        ::close(from_child_);
        from_child_ = -1;
    }
}

void PipeTransport::close() noexcept {
    if (to_child_ >= 0) {
        ::close(to_child_);
        to_child_ = -1;
    }
    reap(false);
    if (from_child_ >= 0) {
        ::close(from_child_);
        from_child_ = -1;
    }
}

// --- LoopbackTransport -----------------------------------------------------

void LoopbackTransport::send(std::span<const std::uint8_t> frame) {
    if (closed_) {
        throw BackendError("backend: write after close");
    }
    auto decoded = proto::decode(frame);
    if (auto* e = std::get_if<proto::DecodeError>(&decoded)) {
        closed_ = true;
        throw BackendError("backend: rejected frame (" + std::string(proto::decode_error_name(*e)) + ")");
    }
    std::optional<proto::Message> reply;
    try {
        reply = server_->handle(std::get<proto::Message>(decoded));
    } catch (const std::exception& e) {
        closed_ = true;
        throw BackendError(std::string("backend: server failed: ") + e.what());
    }
    if (reply) {
        replies_.push_back(proto::encode(*reply));
    }
}

std::vector<std::uint8_t> LoopbackTransport::receive(std::optional<std::chrono::milliseconds>) {
    if (replies_.empty()) {
        throw BackendError(closed_ ? "backend: stream closed" : "backend: timed out waiting for a reply");
    }
    auto out = std::move(replies_.front());
    replies_.pop_front();
    return out;
}

// --- BackendHandle ---------------------------------------------------------

BackendHandle::BackendHandle(std::unique_ptr<Transport> transport, const proto::Hello& request,
                             BackendOptions options)
    : transport_(std::move(transport)), options_(options) {
    open_ = true;
    auto reply = exchange(request, proto::MsgType::hello, options_.handshake_timeout);
    hello_ = std::get<proto::Hello>(reply);
    if (hello_.class_count != request.class_count || hello_.patch_side != request.patch_side) {
        violation("handshake mismatch: requested " + std::to_string(request.class_count) + " classes / side " +
                  std::to_string(request.patch_side) + ", backend offered " + std::to_string(hello_.class_count) +
                  " / " + std::to_string(hello_.patch_side));
    }
}

BackendHandle::~BackendHandle() {
    if (open_) {
        try {
            shutdown();
        } catch (...) {
            transport_->terminate();
        }
    }
}

void BackendHandle::violation(const std::string& what) {
    open_ = false;
    transport_->terminate();
    throw BackendError("backend protocol violation: " + what);
}

proto::Message BackendHandle::exchange(const proto::Message& request, proto::MsgType expected,
                                       std::optional<std::chrono::milliseconds> timeout) {
    if (!open_) {
        throw BackendError("backend: session is closed");
    }
    std::vector<std::uint8_t> frame;
    try {
        transport_->send(proto::encode(request));
        frame = transport_->receive(timeout);
    } catch (const BackendError&) {
        open_ = false;
        transport_->terminate();
        throw;
    }
    auto decoded = proto::decode(frame);
    if (auto* e = std::get_if<proto::DecodeError>(&decoded)) {
        violation("undecodable reply (" + std::string(proto::decode_error_name(*e)) + ")");
    }
    auto& m = std::get<proto::Message>(decoded);
    if (proto::type_of(m) != expected) {
        violation(std::string(proto::msg_type_name(proto::type_of(request))) + " answered with " +
                  std::string(proto::msg_type_name(proto::type_of(m))));
    }
    return std::move(m);
}

double BackendHandle::train(const proto::TrainBatch& batch) {
    auto reply = exchange(batch, proto::MsgType::train_result, options_.request_timeout);
    const double loss = std::get<proto::TrainResult>(reply).loss;
    if (!std::isfinite(loss)) {
        violation("non-finite training loss");
    }
    return loss;
}

proto::TensorF32 BackendHandle::infer(const proto::TensorF32& image) {
    auto reply = exchange(proto::InferRequest{image}, proto::MsgType::infer_response, options_.request_timeout);
    auto probs = std::move(std::get<proto::InferResponse>(reply).probs);
    const std::vector<std::uint32_t> want{hello_.class_count, image.dims[1], image.dims[2], image.dims[3]};
    if (probs.dims != want) {
        violation("InferResponse shape does not match the request");
    }
    const std::size_t voxels = static_cast<std::size_t>(want[1]) * want[2] * want[3];
    for (std::size_t i = 0; i < voxels; ++i) {
        double sum = 0.0;
        for (std::uint32_t c = 0; c < hello_.class_count; ++c) {
            const float p = probs.data[c * voxels + i];
            if (!std::isfinite(p) || p < -kProbabilityTolerance) {
                violation("invalid probability value");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > kProbabilityTolerance) {
            violation("probabilities at voxel " + std::to_string(i) + " sum to " + std::to_string(sum));
        }
    }
    return probs;
}

void BackendHandle::set_learning_rate(double lr) {
    (void)exchange(proto::SetLearningRate{lr}, proto::MsgType::metrics, options_.request_timeout);
}

void BackendHandle::save_checkpoint(const std::string& path) {
    (void)exchange(proto::SaveCheckpoint{path}, proto::MsgType::metrics, options_.request_timeout);
}

void BackendHandle::shutdown() {
    if (!open_) {
        return;
    }
    open_ = false;
    try {
        transport_->send(proto::encode(proto::Shutdown{}));
    } catch (const BackendError&) {
        transport_->terminate();
        throw;
    }
    transport_->close();
}

std::unique_ptr<BackendHandle> spawn_backend(const std::vector<std::string>& command, const proto::Hello& request,
                                             BackendOptions options) {
    return std::make_unique<BackendHandle>(PipeTransport::spawn(command), request, options);
}

std::string BackendSpec::describe() const {
    std::string out;
    for (const auto& part : command) {
        if (!out.empty()) {
            out += ' ';
        }
        out += part;
    }
    return out;
}

std::unique_ptr<BackendHandle> open_backend(const BackendSpec& spec, const proto::Hello& request,
                                            BackendOptions options) {
    if (spec.is_builtin()) {
        return std::make_unique<BackendHandle>(
            std::make_unique<LoopbackTransport>(std::make_unique<ThresholdBackend>()), request, options);
    }
    return spawn_backend(spec.command, request, options);
}

}  // namespace bcseg
