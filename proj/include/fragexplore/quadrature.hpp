#pragma once

#include <cmath>
#include <stdexcept>

namespace fragx {

// Adaptive Gauss-Kronrod 7-15 on finite intervals; semi-infinite tails are
// mapped through l = b + t/(1-t).

namespace detail {

template <class F>
void gk15(const F& f, double a, double b, double& val, double& err) {
    static const double nodes[8] = {
        0.000000000000000, 0.207784955007898, 0.405845151377397, 0.586087235467691,
        0.741531185599394, 0.864864423359769, 0.949107912342759, 0.991455371120813};
    static const double wk[8] = {
        0.209482141084728, 0.204432940075298, 0.190350578064785, 0.169004726639267,
        0.140653259715525, 0.104790010322250, 0.063092092629979, 0.022935322010529};
    static const double wg[4] = {
        0.417959183673469, 0.381830050505119, 0.279705391489277, 0.129484966168870};
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    const double f0 = f(c);
    double k = wk[0] * f0, g = wg[0] * f0;
    for (int i = 1; i < 8; ++i) {
        const double fi = f(c + h * nodes[i]) + f(c - h * nodes[i]);
        k += wk[i] * fi;
        if (i % 2 == 0) g += wg[i / 2] * fi;
    }
    val = k * h;
    err = std::fabs((k - g) * h);
}

template <class F>
double adapt(const F& f, double a, double b, double tol, int depth) {
    double v, e;
    gk15(f, a, b, v, e);
    // the Kronrod error estimate bottoms out around a few ulps of the local
    // value; accepting at that floor keeps steep integrands from wedging the
    // recursion between the halved tolerance and the unreachable estimate
    if (e <= tol || e <= 1e-14 * std::fabs(v) ||
        b - a <= 1e-14 * (std::fabs(a) + std::fabs(b)) || depth > 48) {
        if (depth > 48 && e > 1e3 * tol)
            throw std::runtime_error("quadrature failure: tolerance not met");
        return v;
    }
    const double m = 0.5 * (a + b);
    return adapt(f, a, m, 0.5 * tol, depth + 1) + adapt(f, m, b, 0.5 * tol, depth + 1);
}

} // namespace detail

template <class F>
double integrate(const F& f, double a, double b, double rel_tol = 1e-9) {
    double v0, e0;
    detail::gk15(f, a, b, v0, e0);
    const double tol = rel_tol * std::max(std::fabs(v0), 1e-300);
    return detail::adapt(f, a, b, tol, 0);
}

// integral over [0, b] of an integrand with an integrable power singularity
// at 0 (f ~ l^p, p > -7/8): the substitution l = b s^8 makes it smooth, so
// plain bisection-adaptive quadrature converges
template <class F>
double integrate_sing0(const F& f, double b, double rel_tol = 1e-9) {
    auto g = [&](double s) {
        const double s2 = s * s, s4 = s2 * s2;
        const double l = b * s4 * s4;
        return l > 0.0 ? f(l) * 8.0 * b * s4 * s2 * s : 0.0;
    };
    return integrate(g, 0.0, 1.0, rel_tol);
}

// integral over [a, infinity)
template <class F>
double integrate_tail(const F& f, double a, double rel_tol = 1e-9) {
    auto g = [&](double t) {
        const double w = 1.0 - t;
        return f(a + t / w) / (w * w);
    };
    return integrate(g, 0.0, 1.0, rel_tol);
}

} // namespace fragx
