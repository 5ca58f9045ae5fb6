#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "mcqr/common.hpp"

namespace mcqr {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Combines a seed with substream labels into a new stream id. Used to hand
/// independent, reproducible streams to workers: the result depends only on
/// the inputs, never on call order or thread scheduling.
inline std::uint64_t derive_stream(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = seed ^ 0xD6E8FEB86659FD93ULL;
    for (std::uint64_t p : parts) {
        h ^= p + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
        std::uint64_t s = h;
        h = detail::splitmix64(s);
    }
    return h;
}

/// Deterministic random stream: identical (seed, stream) pairs produce
/// identical draw sequences on a given platform. All transforms are written
/// out explicitly rather than delegating to std:: distributions, whose
/// algorithms are implementation-defined.
class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t stream) {
        state_ = derive_stream(seed, {stream});
        // decorrelate streams whose ids differ in few bits
        detail::splitmix64(state_);
    }

    std::uint64_t next_u64() { return detail::splitmix64(state_); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        require<InvalidConfig>(lo <= hi, "uniform: lo > hi");
        return lo + (hi - lo) * uniform();
    }

    bool bernoulli(double p) {
        require<InvalidConfig>(p >= 0.0 && p <= 1.0, "bernoulli: p outside [0,1]");
        return uniform() < p;
    }

    /// Standard normal via Box-Muller; the second variate of each pair is
    /// cached so consumption alternates one draw, zero draws.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double exponential() {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return -std::log(u);
    }

    /// Gamma(shape, 1) by Marsaglia-Tsang squeeze; shape < 1 handled with the
    /// boost Gamma(a) = Gamma(a+1) * U^{1/a}.
    double gamma(double shape) {
        require<InvalidConfig>(shape > 0.0, "gamma: shape must be positive");
        if (shape < 1.0) {
            double u = uniform();
            while (u <= 0.0) u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double chi_square(double nu) {
        require<InvalidConfig>(nu > 0.0, "chi_square: nu must be positive");
        return 2.0 * gamma(0.5 * nu);
    }

    Vec normals(Eigen::Index k) {
        Vec z(k);
        for (Eigen::Index i = 0; i < k; ++i) z[i] = normal();
        return z;
    }

  private:
    std::uint64_t state_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace mcqr
