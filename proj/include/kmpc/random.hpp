#pragma once

#include <cstdint>

namespace kmpc {

/// SplitMix64 mixer; used to derive independent sub-seeds from a master seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Portable generator with a fixed output sequence on every platform
/// (std distributions are implementation-defined, which breaks byte-identical
/// reports across standard libraries).
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform on [0, 1).
    double uniform();
    /// Uniform on [lo, hi).
    double uniform(double lo, double hi);

private:
    std::uint64_t s_[4];
};

}  // namespace kmpc
