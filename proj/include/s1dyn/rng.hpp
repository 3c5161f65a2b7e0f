#pragma once
#include <cstdint>
#include <cmath>

namespace s1dyn {

// Counter-based generator: every draw is a pure hash of (seed, stream, counter),
// so parallel consumers get identical values regardless of scheduling order.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream), counter_(0) {}

    std::uint64_t next_u64() { return mix(seed_, stream_, counter_++); }

    // uniform in [0,1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform in [a,b)
    double uniform(double a, double b) { return a + (b - a) * next_double(); }

    // standard normal via Box-Muller (two counters per pair, cached)
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double(), u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
        // splitmix64 finalizer over a combined word
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1) + 0xbf58476d1ce4e5b9ULL * (counter + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace s1dyn
