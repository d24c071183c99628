#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bcseg/protocol.hpp"

namespace bcseg {

/// Backend side of the protocol: one reply per request, none for Shutdown.
class BackendServer {
public:
    virtual ~BackendServer() = default;
    virtual std::optional<protocol::Message> handle(const protocol::Message& request) = 0;
};

/// Serves frames from `in_fd` until Shutdown or end of stream. Returns a
/// process exit status: 0 on a clean finish, 4 on a protocol violation.
int serve_stream(BackendServer& server, int in_fd, int out_fd);

/// Frame-level byte channel to a backend.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void send(std::span<const std::uint8_t> frame) = 0;
    /// One complete frame. nullopt timeout waits indefinitely. Throws BackendError.
    virtual std::vector<std::uint8_t> receive(std::optional<std::chrono::milliseconds> timeout) = 0;
    /// Hard stop, used after protocol violations.
    virtual void terminate() noexcept = 0;
    /// Graceful close after Shutdown has been sent.
    virtual void close() noexcept = 0;
};

/// Child process attached through its standard input and output.
class PipeTransport final : public Transport {
public:
    /// Throws BackendError when the command cannot be started.
    static std::unique_ptr<PipeTransport> spawn(const std::vector<std::string>& command);
    ~PipeTransport() override;

    void send(std::span<const std::uint8_t> frame) override;
    std::vector<std::uint8_t> receive(std::optional<std::chrono::milliseconds> timeout) override;
    void terminate() noexcept override;
    void close() noexcept override;

    [[nodiscard]] pid_t pid() const noexcept { return pid_; }

private:
    PipeTransport(pid_t pid, int to_child, int from_child) : pid_(pid), to_child_(to_child), from_child_(from_child) {}
    void read_exact(std::uint8_t* out, std::size_t n, std::optional<std::chrono::steady_clock::time_point> deadline);
    void reap(bool force) noexcept;

    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
};

/// In-process server reached through the same encode/decode path as a child process.
class LoopbackTransport final : public Transport {
public:
    explicit LoopbackTransport(std::unique_ptr<BackendServer> server) : server_(std::move(server)) {}

    void send(std::span<const std::uint8_t> frame) override;
    std::vector<std::uint8_t> receive(std::optional<std::chrono::milliseconds> timeout) override;
    void terminate() noexcept override { closed_ = true; }
    void close() noexcept override { closed_ = true; }

private:
    std::unique_ptr<BackendServer> server_;
    std::deque<std::vector<std::uint8_t>> replies_;
    bool closed_ = false;
};

struct BackendOptions {
    std::chrono::milliseconds handshake_timeout{30000};
    /// Applies to every request after the handshake; nullopt waits indefinitely.
    std::optional<std::chrono::milliseconds> request_timeout;
};

/// Orchestrator-side session. Single owner, one request in flight.
class BackendHandle {
public:
    /// Sends `request` and waits for the backend's Hello; class_count and
    /// patch_side must match. Throws BackendError and terminates the backend otherwise.
    BackendHandle(std::unique_ptr<Transport> transport, const protocol::Hello& request, BackendOptions options = {});
    ~BackendHandle();
    BackendHandle(const BackendHandle&) = delete;
    BackendHandle& operator=(const BackendHandle&) = delete;

    [[nodiscard]] const protocol::Hello& hello() const noexcept { return hello_; }
    [[nodiscard]] std::uint32_t class_count() const noexcept { return hello_.class_count; }
    [[nodiscard]] std::uint32_t patch_side() const noexcept { return hello_.patch_side; }

    double train(const protocol::TrainBatch& batch);
    /// Returns C x S^3 probabilities, checked for shape and per-voxel normalization.
    protocol::TensorF32 infer(const protocol::TensorF32& image);
    void set_learning_rate(double lr);
    void save_checkpoint(const std::string& path);
    void shutdown();

private:
    protocol::Message exchange(const protocol::Message& request, protocol::MsgType expected,
                               std::optional<std::chrono::milliseconds> timeout);
    [[noreturn]] void violation(const std::string& what);

    std::unique_ptr<Transport> transport_;
    BackendOptions options_;
    protocol::Hello hello_;
    bool open_ = false;
};

inline constexpr double kProbabilityTolerance = 1e-4;

/// Launches `command` and performs the handshake.
[[nodiscard]] std::unique_ptr<BackendHandle> spawn_backend(const std::vector<std::string>& command,
                                                           const protocol::Hello& request,
                                                           BackendOptions options = {});

/// Either the built-in threshold backend or an external command.
struct BackendSpec {
    static constexpr const char* kBuiltinThreshold = "builtin-threshold";
    std::vector<std::string> command;  // {"builtin-threshold"} selects the in-process backend

    [[nodiscard]] bool is_builtin() const noexcept { return command.size() == 1 && command[0] == kBuiltinThreshold; }
    [[nodiscard]] std::string describe() const;
    static BackendSpec builtin() { return BackendSpec{{kBuiltinThreshold}}; }
};

[[nodiscard]] std::unique_ptr<BackendHandle> open_backend(const BackendSpec& spec, const protocol::Hello& request,
                                                          BackendOptions options = {});

}  // namespace bcseg
