#pragma once

#include <cstdint>
#include <span>

namespace descan {

/// Counter-based generator: the n-th output of stream (seed, stream) is a
/// pure function of the triple, so replicates can be drawn in any order or
/// on any thread with identical results.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ULL))) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept { return mix(key_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

    /// Uniform integer in [0, bound) by rejection (Lemire's multiply-shift).
    std::uint64_t below(std::uint64_t bound) noexcept {
        if (bound <= 1) return 0;
        for (;;) {
            const __uint128_t m = static_cast<__uint128_t>((*this)()) * bound;
            const auto low = static_cast<std::uint64_t>(m);
            if (low >= bound || low >= (-bound) % bound) return static_cast<std::uint64_t>(m >> 64);
        }
    }

    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    template <typename T>
    void shuffle(std::span<T> items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace descan
