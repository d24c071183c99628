#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace bcseg {

/// FNV-1a 64-bit hash, used to fold strings (case ids, salts) into seeds.
[[nodiscard]] std::uint64_t hash_string(std::string_view text) noexcept;

/// Derives an independent stream seed from a master seed and a key tuple.
/// Order of parts matters; equal inputs always give equal outputs.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t master,
                                        std::initializer_list<std::uint64_t> parts) noexcept;

/// Seeded generator with platform-independent distributions. The standard
/// distribution classes are implementation-defined, so the draws here are
/// written out explicitly to keep outputs identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller (no cached second draw).
    double normal();

    /// Two independent standard normals.
    std::pair<double, double> normal_pair();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace bcseg
