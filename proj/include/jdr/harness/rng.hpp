#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace jdr {

/// SplitMix64 finalizer. Used to derive substream keys and to seed engines.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept {
    std::uint64_t s = a ^ (b * 0xD1B54A32D192ED03ULL);
    std::uint64_t x = splitmix64(s);
    return x ^ splitmix64(s);
}

/// FNV-1a, for turning purpose tags into integers at compile time.
constexpr std::uint64_t tag_hash(std::string_view tag) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// xoshiro256** engine. Satisfies UniformRandomBitGenerator so it plugs into
/// the <random> distributions.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(std::uint64_t key = 0) noexcept {
        std::uint64_t s = key;
        for (auto& w : state_) w = splitmix64(s);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept {
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }
    std::array<std::uint64_t, 4> state_{};
};

/// Counter-based substream derivation: (master seed, replication id, purpose
/// tag) maps to an independent engine. The same triple always yields the same
/// stream, so partitioning replications across workers cannot change results.
struct RngStreamSpec {
    std::uint64_t seed = 20240101;

    [[nodiscard]] std::uint64_t key(std::uint64_t id, std::uint64_t tag) const noexcept {
        return mix64(mix64(seed, id), tag);
    }
    [[nodiscard]] Xoshiro256 stream(std::uint64_t id, std::string_view tag) const noexcept {
        return Xoshiro256(key(id, tag_hash(tag)));
    }
    /// A child spec whose streams are disjoint from this one's; used to give
    /// each evaluation point or nested estimator its own family of streams.
    [[nodiscard]] RngStreamSpec child(std::uint64_t index, std::string_view tag = "child") const noexcept {
        return RngStreamSpec{key(index, tag_hash(tag))};
    }
};

}  // namespace jdr
