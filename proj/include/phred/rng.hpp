// SPDX-License-Identifier: Apache-2.0

#ifndef PHRED_RNG_HPP
#define PHRED_RNG_HPP

#include <cstdint>

namespace phred {

// Counter-based generator: draw k of stream s under seed is a pure function of
// (seed, s, k), so independent streams can be forked without shared state.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
        : seed_(seed), stream_(stream) {}

    std::uint64_t next_u64() noexcept;
    // Uniform in [0, 1).
    double uniform() noexcept;
    // Uniform in (0, 1].
    double uniform_open() noexcept { return 1.0 - uniform(); }
    std::uint64_t below(std::uint64_t n) noexcept;
    double normal() noexcept;

    CounterRng fork(std::uint64_t stream_id) const noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace phred

#endif  // PHRED_RNG_HPP
