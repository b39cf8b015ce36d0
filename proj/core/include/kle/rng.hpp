#pragma once

#include <cmath>
#include <cstdint>

namespace kle {

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter), so parallel realizations are reproducible
// bit-for-bit regardless of scheduling.
class CounterRng {
  public:
    CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {}

    double uniform() { return to_unit(next()); }

    // uniform in [a, b)
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

    std::uint64_t next() { return mix(seed_, stream_, counter_++); }

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream,
                             std::uint64_t counter) {
        // splitmix64 over the packed key
        std::uint64_t x = seed;
        x ^= stream * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL;
        x ^= counter * 0xda942042e4dd58b5ULL + 0xd6e8feb86659fd93ULL;
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    static double to_unit(std::uint64_t x) {
        return static_cast<double>(x >> 11) * 0x1.0p-53;
    }

  private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace kle
