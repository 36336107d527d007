#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pairsim {

/// SplitMix64 finalizer; used to derive independent stream seeds.
inline constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed for stream `index` under `master`. Distinct (master, index) pairs map
/// to well-separated seeds.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index)
{
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

/// Thin wrapper over mt19937_64 with the handful of draws the simulator
/// needs. All draws are implemented here so results do not depend on the
/// standard library's distribution algorithms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1].
    double uniform_open_low() { return 1.0 - uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Number of failures before the first success, success probability q.
    std::uint64_t geometric(double q)
    {
        if (q >= 1.0) return 0;
        const double g = std::floor(std::log(uniform_open_low()) / std::log1p(-q));
        return g >= 1.8e19 ? UINT64_MAX : static_cast<std::uint64_t>(g);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace pairsim
