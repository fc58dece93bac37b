#pragma once

// Seeded random streams. Every run derives four independent streams from one
// config seed: "init" (parameter init), "data" (domain sampling), "latent"
// (z draws), "augment" (augmentation decisions). Keeping them separate means
// e.g. drawing more latents never perturbs data sampling, which is what makes
// whole runs replayable byte for byte.
//
// Normal variates use Box-Muller over the raw mt19937_64 output instead of
// std::normal_distribution, whose algorithm is implementation-defined and
// would tie checkpoints to a particular stdlib.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace genda {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

class RngStream {
  public:
    explicit RngStream(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; caches the second variate
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) {
        // multiply-shift; bias is negligible for n << 2^64
        return static_cast<uint64_t>((static_cast<__uint128_t>(eng_()) * n) >> 64);
    }

  private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// The named streams a run works with.
struct Streams {
    RngStream init;
    RngStream data;
    RngStream latent;
    RngStream augment;

    explicit Streams(uint64_t seed)
        : init(derive(seed, "init")),
          data(derive(seed, "data")),
          latent(derive(seed, "latent")),
          augment(derive(seed, "augment")) {}

    static uint64_t derive(uint64_t seed, std::string_view name) {
        return splitmix64(seed ^ fnv1a64(name));
    }
};

}  // namespace genda
