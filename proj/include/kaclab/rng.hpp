#pragma once

#include <array>
#include <cstdint>
#include <cmath>

namespace kaclab {

// SplitMix64 step: advances the state by the golden-ratio increment and
// returns the mixed output. Fully specified so that any language can
// reproduce the stream.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Counter-based stream derivation: mixes (master, replica_index, stream_tag)
// through three SplitMix64 rounds. The exact algorithm is part of the file
// format contract; see tests/golden/derive_seed.txt for the frozen vector.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::uint64_t replica_index,
                                 std::uint64_t stream_tag) {
    std::uint64_t s = master;
    std::uint64_t h = splitmix64_next(s);
    s = h ^ replica_index;
    h = splitmix64_next(s);
    s = h ^ stream_tag;
    h = splitmix64_next(s);
    return h;
}

// xoshiro256++ by Blackman & Vigna, seeded through SplitMix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) w = splitmix64_next(s);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0,1), 53-bit resolution.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0,1]; safe to pass to log().
    double uniform_pos() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double exponential(double rate) {
        return -std::log(uniform_pos()) / rate;
    }

    // Standard normal via Box-Muller; the sine partner is discarded so the
    // generator stays stateless beyond the xoshiro words.
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.283185307179586476925286766559 * u2);
    }

    std::array<std::uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::array<std::uint64_t, 4> state_{};
};

} // namespace kaclab
