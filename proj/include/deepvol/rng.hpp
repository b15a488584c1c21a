#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "deepvol/math.hpp"

namespace deepvol {

// splitmix64 finalizer; advances `state` and returns a well-mixed word.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Deterministic random substream keyed by (seed, stream index). Each logical
// unit of work (a path block, a dataset row, a chain walker) gets its own
// index, so results do not depend on scheduling or worker count. Normal
// variates go through the inverse CDF so every consumer draws bit-identical
// values from the same substream regardless of platform.
class RandomStream {
  public:
    RandomStream(std::uint64_t seed, std::uint64_t index) : gen_(derive(seed, index)) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on the open interval (0, 1); never returns 0 or 1.
    double uniform() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() { return inv_norm_cdf(uniform()); }

    // Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (0ull - n) % n;
        for (;;) {
            const std::uint64_t r = gen_();
            if (r >= threshold) return r % n;
        }
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::uint64_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }

    // In-place Fisher-Yates on an index range [0, n).
    void shuffle_indices(std::vector<std::size_t>& idx) { shuffle(idx); }

  private:
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t st = seed ^ (0x9E3779B97F4A7C15ull * (index + 1));
        std::uint64_t a = splitmix64(st);
        std::uint64_t b = splitmix64(st);
        return a ^ (b << 1);
    }

    std::mt19937_64 gen_;
};

}  // namespace deepvol
