#pragma once

// Deterministic random streams.
//
// Every random decision in the pipeline draws from a stream identified by
// (seed, key...). Keys are mixed with SplitMix64 into the 64-bit seed of a
// std::mt19937_64 engine, whose output sequence is fixed by the standard.
// Distribution transforms are implemented here rather than with the
// <random> distributions, whose algorithms are implementation-defined.
//
//   uniform01   : top 53 bits of one engine draw, scaled by 2^-53 -> [0, 1)
//   normal      : Box-Muller on two uniform01 draws, cosine branch only
//   below(n)    : rejection sampling on the engine output, unbiased
//
// Streams keyed by cell_id make grid selection independent of iteration order.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace varenn {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix_keys(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    return h;
}

/// Stream tags, so that unrelated consumers of the same seed never collide.
enum class StreamTag : std::uint64_t {
    grid_selection = 1,
    split_shuffle = 2,
    synth_cell = 3,
    synth_noise = 4,
    synth_layout = 5,
    weight_init = 6,
    epoch_shuffle = 7,
    label_shuffle = 8,
};

/// A single uniform draw in [0, 1) that depends only on (seed, tag, key).
inline double hashed_uniform01(std::uint64_t seed, StreamTag tag, std::uint64_t key) {
    return static_cast<double>(mix_keys(seed, {static_cast<std::uint64_t>(tag), key}) >> 11) *
           0x1.0p-53;
}

class RandomStream {
public:
    RandomStream(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> keys = {})
        : engine_(derive(seed, tag, keys)) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    /// Fisher-Yates, from the back.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    static std::uint64_t derive(std::uint64_t seed, StreamTag tag,
                                std::initializer_list<std::uint64_t> keys) {
        std::uint64_t h = mix_keys(seed, {static_cast<std::uint64_t>(tag)});
        for (std::uint64_t k : keys) h = mix_keys(h, {k});
        return h;
    }

    std::mt19937_64 engine_;
};

}  // namespace varenn
