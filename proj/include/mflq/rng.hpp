#pragma once

// Counter-based random stream: every output word is a pure function of
// (seed, stream, counter), so path-level draws are reproducible regardless of
// scheduling or worker count, and the generator is identical across platforms
// (no dependence on std::normal_distribution's library-specific algorithm).
//
// The word function is the splitmix64 finalizer applied to
// base(seed, stream) + counter * GAMMA; the constants are the standard
// splitmix64 ones.

#include <cstdint>

namespace mflq {

class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) : base_(derive_base(seed, stream)) {}

    // i-th word of the stream, independent of draw order.
    std::uint64_t word(std::uint64_t i) const { return finalize(base_ + (i + 1) * GAMMA); }

    // Sequential convenience draws (advance an internal counter).
    std::uint64_t next_word() { return word(counter_++); }

    // Uniform on (0, 1]: 53 random bits, shifted away from zero so logarithms
    // are safe.
    double uniform_pos() {
        return (static_cast<double>(next_word() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Uniform on [0, 1).
    double uniform01() { return static_cast<double>(next_word() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; consumes exactly two words per call.
    double normal();

    // Fair sign in {-1, +1}.
    double sign() { return (next_word() & 1u) ? 1.0 : -1.0; }

    std::uint64_t counter() const { return counter_; }

private:
    static constexpr std::uint64_t GAMMA = 0x9E3779B97F4A7C15ULL;

    static std::uint64_t finalize(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Mix seed and stream so that nearby (seed, stream) pairs land far apart.
    static std::uint64_t derive_base(std::uint64_t seed, std::uint64_t stream) {
        return finalize(finalize(seed + GAMMA) ^ finalize(stream * 0xD1342543DE82EF95ULL + 1));
    }

    std::uint64_t base_;
    std::uint64_t counter_ = 0;
};

}  // namespace mflq
