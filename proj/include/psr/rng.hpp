#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace psr {

/// SplitMix64 finalizer, used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/**
 * Seeded random source shared by every stochastic stage (scarcity, batch
 * sampling, dropout, initialization, synthetic data).
 *
 * The engine is std::mt19937_64, whose output sequence is fixed by the C++
 * standard. Distribution sampling is done here rather than through the
 * <random> distributions, which are implementation-defined, so a given seed
 * produces the same draws with any standard library.
 */
class Rng {
  public:
    static constexpr std::string_view kAlgorithm = "mt19937_64+splitmix64-derive";

    explicit Rng(std::uint64_t seed);

    /// Independent child stream keyed by `stream`; does not advance this one.
    Rng derive(std::uint64_t stream) const;

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);

    /// Standard normal draw (Box-Muller, one value per call).
    double normal();

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

} // namespace psr
