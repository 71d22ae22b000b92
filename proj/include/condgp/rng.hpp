// Counter-keyed random streams.
//
// Every stochastic draw in the library comes from a Stream keyed by a small
// tuple (seed, domain, a, b). Two streams with the same key produce the same
// sequence, so results never depend on evaluation order or thread count.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Dense>

namespace condgp {

namespace detail {

inline std::uint64_t splitmix_finalize(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_key(std::uint64_t h, std::uint64_t v) noexcept {
    return splitmix_finalize(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

}  // namespace detail

/// Stream domains, so that e.g. resampling and propagation never share draws.
enum class StreamDomain : std::uint64_t {
    init = 1,
    propagate = 2,
    resample = 3,
    simulate = 4,
    dataset = 5,
    test = 99,
};

/// SplitMix64 generator seeded from a hashed key; satisfies UniformRandomBitGenerator.
class Stream {
public:
    using result_type = std::uint64_t;

    Stream(std::uint64_t seed, StreamDomain domain, std::uint64_t a = 0, std::uint64_t b = 0) noexcept {
        std::uint64_t h = detail::splitmix_finalize(seed + 0x632be59bd9b4e019ULL);
        h = detail::mix_key(h, static_cast<std::uint64_t>(domain));
        h = detail::mix_key(h, a);
        state_ = detail::mix_key(h, b);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        return detail::splitmix_finalize(state_);
    }

    /// Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // Marsaglia polar method; keeps results identical across standard libraries.
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd out(n);
        for (Eigen::Index i = 0; i < n; ++i) out(i) = normal();
        return out;
    }

private:
    std::uint64_t state_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace condgp
