#include "mdet/rng.hpp"

namespace mdet {

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t key) {
    return mix64(mix64(base) ^ key);
}

Rng::Rng(std::uint64_t seed) {
    // splitmix64 expansion; guards against the all-zero state.
    std::uint64_t x = seed;
    for (auto& s : s_) {
        x = mix64(x);
        s = x;
    }
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) {
        s_[0] = 1;
    }
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

bool Rng::bernoulli(double p) {
    return next_double() < p;
}

std::size_t Rng::next_below(std::size_t n) {
    // Modulo mapping; bias is irrelevant at the n this project uses and the
    // mapping stays platform-stable.
    return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
}

}  // namespace mdet
