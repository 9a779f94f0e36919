#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace wavecast {

/// Counter-based 64-bit mixer (splitmix64 finalizer). Used both as a
/// standalone generator and to derive independent child seeds from a
/// master seed, so results do not depend on evaluation order.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter) {
    return mix64(master ^ mix64(counter));
}

/// Small deterministic PRNG (splitmix64 stream). All randomness in the
/// library flows through this type; std:: distributions are avoided
/// because their output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// Standard normal via Box-Muller (one value per call, cached pair).
    double normal();

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Draws an index from an unnormalized nonnegative weight vector.
std::size_t sample_weighted(std::span<const double> weights, Rng& rng);

/// Draws an index from a normalized probability vector.
std::size_t sample_categorical(std::span<const double> probs, Rng& rng);

} // namespace wavecast
