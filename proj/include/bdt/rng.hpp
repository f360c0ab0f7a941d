#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace bdt {

// Self-contained generators so sampled sequences are reproducible across
// platforms and independent of libstdc++ distribution internals. Streams
// are derived from (master seed, frame, particle, salt) counters, so
// per-particle work can run on any number of threads without changing
// the draws.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1), safe for logs of either tail.
    double uniform_open() {
        double u;
        do { u = uniform(); } while (u <= 0.0);
        return u;
    }

    /// Standard normal via the Marsaglia polar method.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, q;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            q = u * u + v * v;
        } while (q >= 1.0 || q == 0.0);
        const double f = std::sqrt(-2.0 * std::log(q) / q);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Knuth sampler; fine for the small rates used here.
    int poisson(double rate) {
        if (rate <= 0.0) return 0;
        const double limit = std::exp(-rate);
        double prod = 1.0;
        int k = -1;
        do {
            ++k;
            prod *= uniform();
        } while (prod > limit);
        return k;
    }

    /// Marsaglia-Tsang for shape >= 1, boost trick below it.
    double gamma(double shape) {
        if (shape < 1.0) {
            const double u = uniform_open();
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
            const double u = uniform_open();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double beta(double a, double b) {
        const double x = gamma(a);
        const double y = gamma(b);
        return x / (x + y);
    }

    std::vector<double> dirichlet(std::span<const double> alphas) {
        std::vector<double> out(alphas.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < alphas.size(); ++i) {
            out[i] = gamma(alphas[i]);
            sum += out[i];
        }
        for (auto& x : out) x /= sum;
        return out;
    }

    /// Index draw from unnormalized non-negative weights.
    int categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = uniform() * total;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            u -= weights[i];
            if (u <= 0.0) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size()) - 1;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4]{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Deterministic seed mixing for derived sub-runs.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t salt) {
    std::uint64_t sm = master ^ (salt * 0x9E3779B97F4A7C15ull);
    return splitmix64(sm);
}

/// Deterministic stream derivation; each distinct counter tuple gets an
/// independent stream regardless of evaluation order.
inline RandomStream derive_stream(std::uint64_t master, std::uint64_t a,
                                  std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t sm = master;
    std::uint64_t h = splitmix64(sm);
    sm ^= a + 0x632BE59BD9B4E019ull;
    h ^= splitmix64(sm);
    sm ^= b + 0x9E3779B97F4A7C15ull;
    h ^= splitmix64(sm);
    sm ^= c + 0xD6E8FEB86659FD93ull;
    h ^= splitmix64(sm);
    return RandomStream(h);
}

}  // namespace bdt
