#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>
#include <numbers>

#include "fragexplore/rng.hpp"

namespace fragx {

// Truncated alpha-stable machinery: Poisson point processes of jumps with
// intensity a_pm * dt * dl / l^{1+alpha}, zero-mean (martingale) compensation.

struct StableJumpLaw {
    double alpha;    // in (1,2); the paper's regime is (1, 3/2)
    double a_plus;
    double a_minus;
};

enum class JumpSide { none, left, right };
enum class JumpKind { plain, loop, split };

struct JumpEvent {
    double time;
    double size;     // positive magnitude
    int sign;        // +1 or -1
    JumpSide side = JumpSide::none;
    JumpKind kind = JumpKind::plain;
};

struct SkeletonPath {
    double horizon;
    double cutoff;
    double drift_rate;
    double start_value;
    std::vector<JumpEvent> jumps;

    double value_at(double t) const {
        double v = start_value + drift_rate * t;
        for (const auto& j : jumps) {
            if (j.time > t) break;
            v += j.sign * j.size;
        }
        return v;
    }
    double terminal() const { return value_at(horizon); }
};

// mean number of jumps per sign on [0,T] with sizes in [delta, cap)
inline double ppp_band_mass(double a, double alpha, double delta, double cap, double T) {
    const double capterm = std::isinf(cap) ? 0.0 : std::pow(cap, -alpha);
    return (a / alpha) * (std::pow(delta, -alpha) - capterm) * T;
}

inline std::vector<JumpEvent> sample_jump_ppp(const StableJumpLaw& law, double T,
                                              double delta_cut, double cap, Rng& rng) {
    if (!(T > 0.0) || !(delta_cut > 0.0) || !(delta_cut < cap))
        throw std::domain_error("sample_jump_ppp: need T > 0 and 0 < delta_cut < cap");
    std::vector<JumpEvent> out;
    const double capp = std::isinf(cap) ? 0.0 : std::pow(cap, -law.alpha);
    const double dp = std::pow(delta_cut, -law.alpha);
    for (int s = 0; s < 2; ++s) {
        const double a = s == 0 ? law.a_plus : law.a_minus;
        if (a <= 0.0) continue;
        const long n = rng.poisson((a / law.alpha) * (dp - capp) * T);
        for (long i = 0; i < n; ++i) {
            // inverse transform on the truncated power law
            const double u = rng.uniform();
            const double size = std::pow(dp - u * (dp - capp), -1.0 / law.alpha);
            out.push_back({rng.uniform() * T, size, s == 0 ? +1 : -1});
        }
    }
    std::sort(out.begin(), out.end(), [](const JumpEvent& x, const JumpEvent& y) {
        if (x.time != y.time) return x.time < y.time;
        if (x.sign != y.sign) return x.sign > y.sign; // collision tie-break: determinism
        return x.size < y.size;
    });
    return out;
}

// drift making the truncated process a martingale
inline double compensator_drift(const StableJumpLaw& law, double delta_cut) {
    if (!(delta_cut > 0.0)) throw std::domain_error("compensator_drift: delta_cut > 0");
    return -(law.a_plus - law.a_minus) * std::pow(delta_cut, 1.0 - law.alpha) / (law.alpha - 1.0);
}

inline SkeletonPath sample_path(const StableJumpLaw& law, double T, double delta_cut,
                                double start, Rng& rng,
                                double cap = std::numeric_limits<double>::infinity()) {
    SkeletonPath p;
    p.horizon = T;
    p.cutoff = delta_cut;
    p.start_value = start;
    p.drift_rate = compensator_drift(law, delta_cut);
    p.jumps = sample_jump_ppp(law, T, delta_cut, cap, rng);
    return p;
}

// P[X_t > 0] from the up/down intensity ratio u, via the ladder-height sine relation
inline double positivity_parameter(double u, double alpha) {
    if (u < 0.0) throw std::domain_error("positivity_parameter: u >= 0 required");
    if (!(alpha > 1.0 && alpha < 2.0)) throw std::domain_error("alpha outside (1,2)");
    const double pi = std::numbers::pi;
    const double plo = 1.0 - 1.0 / alpha, phi = 1.0 / alpha;
    if (u == 0.0) return plo;
    if (std::isinf(u)) return phi;
    auto f = [&](double P) { return std::sin(pi * alpha * (1.0 - P)) / std::sin(pi * alpha * P); };
    double a = plo, b = phi;
    for (int it = 0; it < 200 && (b - a) > 1e-14; ++it) {
        const double m = 0.5 * (a + b);
        if (f(m) < u) a = m; else b = m;
    }
    return 0.5 * (a + b);
}

} // namespace fragx
