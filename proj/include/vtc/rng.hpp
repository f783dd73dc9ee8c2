#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace vtc {

/// Seeded generator whose output stream is fully specified: the engine is
/// std::mt19937_64 (its sequence is fixed by the standard) and the
/// derived distributions below are implemented here, not by the standard
/// library's implementation-defined distribution classes.
class Rng {
public:
    static constexpr const char* kAlgorithm = "mt19937_64+u53+rejection";

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) {
        // Reject the top partial bucket so every residue is equally likely.
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace vtc
