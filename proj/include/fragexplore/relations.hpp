#pragma once

#include <cmath>
#include <stdexcept>
#include <numbers>

namespace fragx {

// Exponent algebra for the kappa in (8/3, 4) regime. All closed forms; the
// beta <-> rho' map is solved by bisection (monotone on its bracket).

struct KappaRelations {
    double kappa;
    double gamma;          // sqrt(kappa)
    double kappa_prime;    // 16/kappa
    double alpha;          // 4/kappa, in (1, 3/2)
    double u;              // -cos(pi*alpha), in (0,1)
    double malthus_delta;  // alpha + 1/2
};

struct AsymmetrySplit {
    double beta;
    double p;          // (1+beta)/2
    double rho_prime;
    double a_lm, a_rm; // negative-jump intensities (equal)
    double a_lp, a_rp; // positive-jump intensities, left/right
    double a_plus, a_minus;
};

struct LadderQuantities {
    double P_L, P_R;
    double u_L, u_R;
    double delta_L, delta_R;
};

inline KappaRelations derive_relations(double kappa) {
    if (!(kappa > 8.0 / 3.0 && kappa < 4.0))
        throw std::domain_error("kappa must lie strictly inside (8/3, 4)");
    KappaRelations r;
    r.kappa = kappa;
    r.gamma = std::sqrt(kappa);
    r.kappa_prime = 16.0 / kappa;
    r.alpha = 4.0 / kappa;
    r.u = -std::cos(std::numbers::pi * r.alpha);
    r.malthus_delta = r.alpha + 0.5;
    return r;
}

namespace detail {
// ratio (1-beta)/(1+beta) as a function of rho' in (kp-6, 0)
inline double beta_sine_ratio(double rho_prime, double kappa_prime) {
    const double pi = std::numbers::pi;
    return std::sin(-pi * rho_prime / 2.0) /
           std::sin(-pi * (kappa_prime - 6.0 - rho_prime) / 2.0);
}
} // namespace detail

inline double beta_from_rho_prime(double rho_prime, const KappaRelations& rel) {
    const double lo = rel.kappa_prime - 6.0;
    if (rho_prime < lo - 1e-12 || rho_prime > 1e-12)
        throw std::domain_error("rho_prime outside [kappa'-6, 0]");
    if (rho_prime >= -1e-15) return 1.0;
    if (rho_prime <= lo + 1e-15) return -1.0;
    const double r = detail::beta_sine_ratio(rho_prime, rel.kappa_prime);
    return (1.0 - r) / (1.0 + r);
}

inline double rho_prime_from_beta(double beta, const KappaRelations& rel) {
    if (beta < -1.0 || beta > 1.0) throw std::domain_error("beta outside [-1,1]");
    const double lo = rel.kappa_prime - 6.0;
    if (beta == 1.0) return 0.0;    // paper convention: 1/0 = infinity
    if (beta == -1.0) return lo;
    // beta_from_rho_prime is increasing in rho'; bisect to machine precision
    double a = lo, b = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double m = 0.5 * (a + b);
        if (m <= a || m >= b) break;
        if (beta_from_rho_prime(m, rel) < beta) a = m; else b = m;
    }
    return 0.5 * (a + b);
}

inline LadderQuantities ladder_quantities(double rho_prime, const KappaRelations& rel) {
    const double pi = std::numbers::pi;
    const double a = rel.alpha;
    const double rho_r = rel.kappa_prime - 6.0 - rho_prime; // mirrored role on the right
    LadderQuantities q;
    q.P_L = (a - rho_prime / 2.0 - 1.0) / a;
    q.P_R = (a - rho_r / 2.0 - 1.0) / a;
    q.u_L = std::sin(pi * a * (1.0 - q.P_L)) / std::sin(pi * a * q.P_L);
    q.u_R = std::sin(pi * a * (1.0 - q.P_R)) / std::sin(pi * a * q.P_R);
    q.delta_L = 3.0 - a + rho_prime / 2.0;
    q.delta_R = a - rho_prime / 2.0;
    return q;
}

inline AsymmetrySplit intensity_split(double beta, double a_lm, const KappaRelations& rel) {
    if (!(a_lm > 0.0)) throw std::domain_error("a_lm must be positive");
    AsymmetrySplit s;
    s.beta = beta;
    s.p = (1.0 + beta) / 2.0;
    s.rho_prime = rho_prime_from_beta(beta, rel);
    s.a_lm = a_lm;
    s.a_rm = a_lm;
    s.a_plus = -2.0 * a_lm * std::cos(std::numbers::pi * rel.alpha);
    s.a_lp = (1.0 - beta) / 2.0 * s.a_plus;
    s.a_rp = (1.0 + beta) / 2.0 * s.a_plus;
    s.a_minus = s.a_lm + s.a_rm;
    return s;
}

inline double wedge_bessel_dimension(double W, const KappaRelations& rel) {
    if (!(W > 0.0)) throw std::domain_error("wedge weight must be positive");
    return 1.0 + 2.0 * W / (rel.gamma * rel.gamma);
}

inline bool wedge_is_thick(double W, const KappaRelations& rel) {
    return wedge_bessel_dimension(W, rel) >= 2.0;
}

} // namespace fragx
