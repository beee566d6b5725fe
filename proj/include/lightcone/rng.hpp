#pragma once

#include <cstdint>
#include <random>

namespace lightcone {

/// Mixes a parent seed with a stream id (SplitMix64 finalizer). Used to derive
/// independent, reproducible streams, e.g. one per epoch or per worker.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded random source: std::mt19937_64 for raw bits, uniforms from the top
/// 53 bits, normals via the Box-Muller transform (both outputs are used).
///
/// The engine output sequence is fixed by the C++ standard, and the transforms
/// are implemented here rather than through <random> distributions, so a given
/// seed yields the same stream on every conforming platform.
class RandomState {
public:
    static constexpr const char* kAlgorithm = "mt19937_64+box-muller";

    explicit RandomState(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    /// Independent child stream; does not advance this state.
    RandomState split(std::uint64_t stream) const { return RandomState(derive_seed(seed_, stream)); }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in (0, 1]; safe as a log argument.
    double uniform_open0();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    double normal();

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace lightcone
