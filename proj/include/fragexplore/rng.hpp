#pragma once

#include <cstdint>
#include <cmath>

namespace fragx {

// Counter-based stream derivation: every consumer owns an Rng constructed
// from a 64-bit key. Keys are hash-chained (derive_key), so a particle's
// stream depends only on its lineage, never on traversal order.

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_key(std::uint64_t parent, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t h = mix64(parent ^ 0x6a09e667f3bcc909ULL);
    h = mix64(h ^ mix64(a));
    h = mix64(h ^ mix64(b ^ 0xbb67ae8584caa73bULL));
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t key = 0) : state_(mix64(key ^ 0x243f6a8885a308d3ULL)) {
        // warm up so adjacent keys decorrelate fully
        next_u64(); next_u64();
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix64(state_);
    }

    // uniform on (0,1): never returns 0 or 1
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double exponential(double rate) {
        return -std::log(uniform()) / rate;
    }

    double normal() {
        if (have_spare_) { have_spare_ = false; return spare_; }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    // Poisson: inversion for small means, PTRD (Hoermann) otherwise.
    long poisson(double mu) {
        if (mu <= 0.0) return 0;
        if (mu < 12.0) {
            const double L = std::exp(-mu);
            long k = 0;
            double p = 1.0;
            do { ++k; p *= uniform(); } while (p > L);
            return k - 1;
        }
        return poisson_ptrd(mu);
    }

private:
    long poisson_ptrd(double mu) {
        const double smu = std::sqrt(mu);
        const double b = 0.931 + 2.53 * smu;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            double u = uniform() - 0.5;
            double v = uniform();
            double us = 0.5 - std::fabs(u);
            long k = static_cast<long>(std::floor((2.0 * a / us + b) * u + mu + 0.43));
            if (us >= 0.07 && v <= vr) return k;
            if (k < 0 || (us < 0.013 && v > us)) continue;
            double lhs = std::log(v * inv_alpha / (a / (us * us) + b));
            double rhs = -mu + k * std::log(mu) - std::lgamma(k + 1.0);
            if (lhs <= rhs) return k;
        }
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace fragx
