#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace crowdbandit {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Hashes a root seed and a path of indices into a stream key. Distinct paths give
// statistically independent streams, which is what makes runs reproducible no
// matter which worker executes them.
constexpr std::uint64_t derive_key(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = mix64(seed ^ 0x6A09E667F3BCC909ULL);
    for (std::uint64_t p : path) {
        h = mix64(h ^ mix64(p + kGoldenGamma));
    }
    return h;
}

// Counter-based stream: the n-th output is a pure function of (key, n).
// Satisfies UniformRandomBitGenerator.
class RandomStream {
public:
    using result_type = std::uint64_t;

    constexpr explicit RandomStream(std::uint64_t key) noexcept : key_(key) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept { return mix64(key_ + (++counter_) * kGoldenGamma); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1].
    double uniform_positive() noexcept {
        return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    constexpr RandomStream split(std::uint64_t index) const noexcept {
        return RandomStream(derive_key(key_, {index}));
    }

    constexpr std::uint64_t key() const noexcept { return key_; }
    constexpr std::uint64_t position() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Top-level stream domains, so unrelated consumers of one seed never collide.
enum class StreamDomain : std::uint64_t {
    generator = 1,
    oracle_runs = 2,
    algorithm_runs = 3,
    theory = 4,
    simulate = 5,
};

// Streams for one rollout: one per (arm, step) for growth draws, one per (arm, step)
// for reward draws, and one per step for the agent's own randomisation.
class RunStreams {
public:
    constexpr explicit RunStreams(std::uint64_t run_key) noexcept : key_(run_key) {}

    constexpr RandomStream growth(std::size_t arm, std::size_t t) const noexcept {
        return RandomStream(derive_key(key_, {1, arm, t}));
    }
    constexpr RandomStream reward(std::size_t arm, std::size_t t) const noexcept {
        return RandomStream(derive_key(key_, {2, arm, t}));
    }
    constexpr RandomStream agent(std::size_t t) const noexcept {
        return RandomStream(derive_key(key_, {3, t}));
    }
    constexpr std::uint64_t key() const noexcept { return key_; }

private:
    std::uint64_t key_;
};

} // namespace crowdbandit
