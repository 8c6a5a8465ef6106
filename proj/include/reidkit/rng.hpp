#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace reidkit {

// Deterministic random streams. All draws go through explicit conversions
// below instead of std::*_distribution, so identical seeds give identical
// values on every platform and standard library.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next() % span);
    }

    // Standard normal via Box-Muller (first branch only, fixed draw count).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 engine_;
};

// SplitMix64 finalizer, used to derive well-separated stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Independent counter-indexed stream: (seed, stream id, counter) -> Rng.
// Used so batch sampling and erasing stay reproducible regardless of
// execution overlap.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    return Rng(mix_seed(mix_seed(mix_seed(seed) ^ stream) ^ counter));
}

}  // namespace reidkit
