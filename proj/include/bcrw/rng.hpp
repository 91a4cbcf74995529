#pragma once
// Counter-keyed deterministic RNG. Every stream is identified by a 64-bit key
// derived from (master seed, purpose, index), so replica results never depend
// on worker count or scheduling.

#include <cstdint>
#include <cmath>

namespace bcrw {

inline constexpr std::uint64_t GOLDEN = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += GOLDEN;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// fold an index into a key; chainable: key(seed, a, b, c)
inline std::uint64_t derive_key(std::uint64_t k) { return splitmix64(k); }
template <class... Rest>
inline std::uint64_t derive_key(std::uint64_t k, std::uint64_t i, Rest... rest) {
    return derive_key(splitmix64(k ^ (GOLDEN * (i + 1))), rest...);
}

// SplitMix64 sequence. Fast, 2^64 period per stream, plenty for MC use here.
class Rng {
  public:
    explicit Rng(std::uint64_t key = 0) : state_(splitmix64(key ^ 0x5851f42d4c957f2dULL)) {}

    std::uint64_t next_u64() {
        state_ += GOLDEN;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // uniform on (0,1): never returns 0 or 1, safe for log()
    double u01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * u01(); }

    std::uint64_t below(std::uint64_t n) {
        // Lemire-style rejection-free enough for MC; bias < 2^-64 * n, negligible
        return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    double exponential() { return -std::log(u01()); }

    // Marsaglia polar with cached spare; deterministic per stream
    double normal() {
        if (have_spare_) { have_spare_ = false; return spare_; }
        double u, v, s;
        do {
            u = 2.0 * u01() - 1.0;
            v = 2.0 * u01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace bcrw
