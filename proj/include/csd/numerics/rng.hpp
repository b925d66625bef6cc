#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace csd::num {

// xoshiro256** seeded through splitmix64. Every draw is defined in terms of
// 64-bit integer arithmetic so streams are identical across platforms.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n); n > 0. Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n);
    // Standard normal via Box-Muller (one value per call, no caching).
    double normal();

    template <typename T>
    void shuffle(std::span<T> items)
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }
    template <typename T>
    void shuffle(std::vector<T>& items)
    {
        shuffle(std::span<T>(items));
    }

    // Independent child stream; same (seed, stream) always gives the same child.
    static SeededRng derive(std::uint64_t seed, std::uint64_t stream);

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace csd::num
