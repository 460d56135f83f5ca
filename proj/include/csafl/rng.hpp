#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace csafl {

// Mixes a base seed with a sequence of stream coordinates (round, client,
// update index, ...) into an independent 64-bit seed. Used so that random
// draws depend only on their logical position, never on processing order.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords);

// mt19937_64 with hand-written distributions. The standard library leaves
// distribution algorithms implementation-defined; these are fixed so seeded
// output is identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n);

    // Marsaglia polar method; the spare variate is cached.
    double normal(double mean = 0.0, double stddev = 1.0);

    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace csafl
