#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace mdet {

// Deterministic xoshiro256** stream with explicit output mappings.
// std:: distributions are implementation-defined, so every draw here is
// specified down to the bit: the same seed yields the same stream on any
// platform, which is what the reproducibility contracts lean on.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1), 53-bit mantissa.
    double next_double();

    // True with probability p (p outside [0,1] clamps to never/always).
    bool bernoulli(double p);

    // Uniform in [0, n); n must be nonzero.
    std::size_t next_below(std::size_t n);

    // Fisher-Yates; deterministic given the stream position.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[next_below(i)]);
        }
    }

private:
    std::uint64_t s_[4];
};

// One splitmix64 step; the seeding primitive.
std::uint64_t mix64(std::uint64_t x);

// Independent substream seed for an item within a base-seeded run, so that
// per-item work can run in any order (or concurrently) without changing
// results.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t key);

}  // namespace mdet
