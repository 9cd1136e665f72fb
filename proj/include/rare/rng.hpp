#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace rare {

/// Seeded generator with platform-independent derived distributions.
///
/// The standard distributions (`std::uniform_real_distribution`,
/// `std::shuffle`, ...) are implementation-defined, so draws are built
/// directly on the raw 64-bit output of mt19937_64, which is fully specified.
class rng {
  public:
    explicit rng(std::uint64_t seed) : m_engine(seed) {}

    std::uint64_t next_u64() { return m_engine(); }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(m_engine() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t bound)
    {
        if (bound <= 1) {
            return 0;
        }
        std::uint64_t const limit = std::numeric_limits<std::uint64_t>::max()
            - std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x = m_engine();
        while (x >= limit) {
            x = m_engine();
        }
        return x % bound;
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::span<T> items)
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t const j = below(i);
            using std::swap;
            swap(items[i - 1], items[j]);
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& items)
    {
        shuffle(std::span<T>(items));
    }

  private:
    std::mt19937_64 m_engine;
};

/// SplitMix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30U)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27U)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31U);
}

}  // namespace rare
