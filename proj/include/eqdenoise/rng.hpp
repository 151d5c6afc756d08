#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace eqd {

// Deterministic RNG. All randomness in the project flows from one master
// seed through named sub-streams, so components can be reproduced in
// isolation and results are schedule-independent.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    static uint64_t mix(uint64_t seed, std::string_view name, uint64_t index = 0) {
        uint64_t x = seed ^ 0x9e3779b97f4a7c15ull;
        for (char c : name) x = (x ^ static_cast<uint64_t>(c)) * 0x100000001b3ull;
        x ^= index + 0x9e3779b97f4a7c15ull + (x << 6) + (x >> 2);
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    static Rng stream(uint64_t seed, std::string_view name, uint64_t index = 0) {
        return Rng(mix(seed, name, index));
    }

    uint64_t next_u64() { return gen_(); }

    double uniform() {
        return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);  // [0,1)
    }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // Box-Muller; avoids implementation-defined std::normal_distribution.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(gen_() % span);
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace eqd
