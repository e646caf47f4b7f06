#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace ssrmap {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream for (seed, salt). Used so that e.g. the epoch-e
// shuffle depends only on (seed, e) and not on how many draws came before.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t salt = 0) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(salt)));
}

// Fisher-Yates with explicit uniform draws. std::shuffle's use of the
// engine is implementation-defined; this is not.
template <typename T>
void deterministic_shuffle(std::span<T> items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(items[i - 1], items[j]);
    }
}

// Standard normal via Box-Muller on raw engine output, for bitwise
// reproducibility across standard libraries.
class GaussianSource {
public:
    explicit GaussianSource(std::mt19937_64& rng) : rng_(rng) {}
    double operator()();

private:
    std::mt19937_64& rng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace ssrmap
