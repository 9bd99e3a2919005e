#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fragexplore/rng.hpp"

namespace fragx {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    long n = 0;
};

inline MeanSe mean_se(const std::vector<double>& x) {
    MeanSe r;
    r.n = static_cast<long>(x.size());
    if (r.n == 0) return r;
    double s = 0.0;
    for (double v : x) s += v;
    r.mean = s / r.n;
    if (r.n > 1) {
        double ss = 0.0;
        for (double v : x) ss += (v - r.mean) * (v - r.mean);
        r.se = std::sqrt(ss / (r.n - 1.0) / r.n);
    }
    return r;
}

// Jackknife s.e. of the mean of per-replicate values (equals the usual s.e.
// for a plain mean, but kept generic for ratio-type statistics).
template <class Stat>
inline double jackknife_se(const std::vector<double>& x, Stat stat) {
    const long n = static_cast<long>(x.size());
    if (n < 2) return 0.0;
    double total = 0.0;
    for (double v : x) total += v;
    std::vector<double> loo(n);
    for (long i = 0; i < n; ++i) loo[i] = stat((total - x[i]) / (n - 1.0));
    const double full = stat(total / n);
    double ss = 0.0;
    for (double v : loo) ss += (v - full) * (v - full);
    return std::sqrt((n - 1.0) / n * ss);
}

inline double pearson_corr(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::domain_error("pearson_corr: bad input");
    const long n = static_cast<long>(x.size());
    double mx = 0.0, my = 0.0;
    for (long i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
    mx /= n; my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (long i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

// Two-sample KS statistic; pass at level 0.01 means D < 1.628*sqrt((n+m)/(n*m)).
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const long n = static_cast<long>(a.size()), m = static_cast<long>(b.size());
    long i = 0, j = 0;
    double d = 0.0;
    while (i < n && j < m) {
        // consume ties on both sides before comparing the ECDFs, so atoms
        // (repeated values) do not inflate the statistic
        const double v = std::min(a[i], b[j]);
        while (i < n && a[i] == v) ++i;
        while (j < m && b[j] == v) ++j;
        d = std::max(d, std::fabs(double(i) / n - double(j) / m));
    }
    return d;
}

inline bool ks_pass(double d, long n, long m, double c_level = 1.628 /* level 0.01 */) {
    return d < c_level * std::sqrt(double(n + m) / (double(n) * double(m)));
}

// Hill estimator of the tail index from exceedances above x0.
// Returns the index of P[X >= x] ~ x^{-idx} and its nominal s.e.
struct HillFit { double index; double se; long k; };

inline HillFit hill_estimator(const std::vector<double>& sample, double x0) {
    double s = 0.0;
    long k = 0;
    for (double v : sample)
        if (v >= x0) { s += std::log(v / x0); ++k; }
    if (k < 2) return {0.0, 0.0, k};
    const double idx = k / s;
    return {idx, idx / std::sqrt(double(k)), k};
}

inline double bootstrap_se(const std::vector<double>& per_rep, Rng& rng, int nboot,
                           double (*stat)(const std::vector<double>&)) {
    const long n = static_cast<long>(per_rep.size());
    std::vector<double> vals(nboot);
    std::vector<double> resampled(n);
    for (int b = 0; b < nboot; ++b) {
        for (long i = 0; i < n; ++i)
            resampled[i] = per_rep[static_cast<long>(rng.uniform() * n)];
        vals[b] = stat(resampled);
    }
    MeanSe ms = mean_se(vals);
    return ms.se * std::sqrt(double(nboot)); // sd of the bootstrap distribution
}

} // namespace fragx
