#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace pathonet {

// splitmix64; used to derive independent per-item seeds from one run seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic RNG. mt19937_64 output is pinned by the standard; the
// distribution mappings below are hand-rolled because std:: distributions
// are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 42) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0,1) with 53 random bits
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    float uniformf() {
        return static_cast<float>(gen_() >> 40) * 0x1.0p-24f; // 24 bits
    }

    float uniformf(float lo, float hi) { return lo + (hi - lo) * uniformf(); }

    // [0,n), n > 0
    std::int64_t uniform_int(std::int64_t n) {
        return static_cast<std::int64_t>(gen_() % static_cast<std::uint64_t>(n));
    }

    // Box-Muller, consumes two draws per call
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::int64_t i = static_cast<std::int64_t>(items.size()) - 1; i > 0; --i) {
            std::int64_t j = uniform_int(i + 1);
            std::swap(items[static_cast<std::size_t>(i)], items[static_cast<std::size_t>(j)]);
        }
    }

private:
    std::mt19937_64 gen_;
};

} // namespace pathonet
