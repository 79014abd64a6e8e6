#pragma once

// Deterministic seeded randomness. Every pipeline stage derives its own
// substream from the root seed and a name, so stages can be re-seeded
// independently and parallel/serial runs produce identical data.

#include <cstdint>
#include <cmath>
#include <string>

namespace tristream {

// splitmix64; stable across platforms unlike std:: distributions.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // standard normal, Box-Muller (one value per call, second discarded)
    double normal() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::uint64_t next_below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  private:
    std::uint64_t state_;
};

inline std::uint64_t hash_string(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Named substream of a root seed, optionally indexed (per sample, per epoch).
inline Rng substream(std::uint64_t root_seed, const std::string& name, std::uint64_t index = 0) {
    Rng mix(root_seed ^ hash_string(name));
    std::uint64_t a = mix.next_u64();
    Rng mix2(a ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
    return Rng(mix2.next_u64());
}

template <typename V>
void shuffle(V& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace tristream
