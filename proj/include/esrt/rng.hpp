#pragma once

#include <cstdint>
#include <cstdio>
#include <cmath>
#include <string>

#include "esrt/errors.hpp"

namespace esrt {

// xoshiro256** generator. Used instead of <random> engines because its state
// is four u64 words that serialize exactly (checkpoints must round-trip
// bit-identically) and the stream is identical on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        // splitmix64 expansion of the seed into the full state
        uint64_t x = seed;
        for (auto& word : state_) {
            x += 0x9E3779B97F4A7C15ull;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
            word = z ^ (z >> 31);
        }
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    int64_t below(int64_t n) {
        if (n <= 0) throw ArgError("Rng::below needs n > 0");
        return int64_t(next_u64() % uint64_t(n));
    }

    bool coin() { return (next_u64() & 1ull) != 0; }

    // standard normal via Box-Muller (used only for test data, not init)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::string state_hex() const {
        char buf[4 * 16 + 1];
        std::snprintf(buf, sizeof(buf), "%016llx%016llx%016llx%016llx",
                      (unsigned long long)state_[0], (unsigned long long)state_[1],
                      (unsigned long long)state_[2], (unsigned long long)state_[3]);
        return std::string(buf);
    }

    void set_state_hex(const std::string& hex) {
        if (hex.size() != 64) throw ArgError("rng state must be 64 hex chars");
        for (int i = 0; i < 4; ++i) {
            state_[i] = std::stoull(hex.substr(size_t(i) * 16, 16), nullptr, 16);
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
};

}  // namespace esrt
