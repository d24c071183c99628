#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "bcseg/backend.hpp"
#include "bcseg/phantom.hpp"
#include "bcseg/protocol.hpp"
#include "bcseg/rng.hpp"
#include "bcseg/volume.hpp"

namespace bcseg::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

[[nodiscard]] std::filesystem::path data_dir();
[[nodiscard]] std::string read_file(const std::filesystem::path& path);

[[nodiscard]] Geometry unit_geometry(std::int64_t nx, std::int64_t ny, std::int64_t nz);

/// A small phantom (body half axes 36 x 28 x 30 mm) for fast tests.
[[nodiscard]] PhantomSpec small_phantom_spec(std::uint64_t seed = 1, double noise = 0.0);

/// Random well-formed message of any type, with small tensors.
[[nodiscard]] protocol::Message random_message(Rng& rng);

/// Handshaken session with an in-process server.
[[nodiscard]] std::unique_ptr<BackendHandle> loopback(std::unique_ptr<BackendServer> server,
                                                      const protocol::Hello& request);

/// Handshaken session with the built-in threshold backend.
[[nodiscard]] std::unique_ptr<BackendHandle> threshold_session(std::uint32_t patch_side = 80,
                                                               std::optional<ClassId> target = std::nullopt);

}  // namespace bcseg::testing
