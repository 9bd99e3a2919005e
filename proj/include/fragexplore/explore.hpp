#pragma once

#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fragexplore/quadrature.hpp"
#include "fragexplore/relations.hpp"
#include "fragexplore/rng.hpp"
#include "fragexplore/stable.hpp"

namespace fragx {

// Boundary-length processes of disk explorations. The policy process Y has
// state-dependent rates
//   up:   a_plus  * y^{a+1} / (l^{a+1} (y+l)^{a+1})
//   down: a_minus * y^{a+1} / (l^{a+1} (y-l)^{a+1}) * 1{l < y/2}
// simulated by thinning against the homogeneous envelope
// (a_plus + 2^{a+1} a_minus) / l^{a+1}.

enum class DiskMode { policy, chordal_left, chordal_right };

struct DiskRates {
    double alpha;
    double a_plus;
    double a_minus;
    DiskMode mode = DiskMode::policy;
};

inline double disk_jump_rate(const DiskRates& r, double y, double l, int sign) {
    if (!(y > 0.0) || !(l > 0.0)) throw std::domain_error("disk_jump_rate: y,l > 0");
    const double ap1 = r.alpha + 1.0;
    if (sign > 0)
        return r.a_plus * std::pow(y / (l * (y + l)), ap1);
    if (r.mode == DiskMode::policy && l >= y / 2.0) return 0.0;
    if (l >= y) return 0.0;
    return r.a_minus * std::pow(y / (l * (y - l)), ap1);
}

// quadrature over sizes >= delta, both signs (relative tolerance 1e-8)
inline double total_jump_rate(const DiskRates& r, double y, double delta) {
    if (!(delta > 0.0 && delta < y / 2.0)) throw std::domain_error("total_jump_rate: 0 < delta < y/2");
    double tot = 0.0;
    if (r.a_plus > 0.0)
        tot += integrate_tail([&](double l) { return disk_jump_rate(r, y, l, +1); }, delta, 1e-8);
    if (r.a_minus > 0.0) {
        const double hi = r.mode == DiskMode::policy ? y / 2.0 : y;
        tot += integrate([&](double l) { return disk_jump_rate(r, y, l, -1); }, delta, hi, 1e-8);
    }
    return tot;
}

// ---------------------------------------------------------------------------
// Series expansions around l/y = 0 (binomial coefficients of (1+s)^{-a-1}).

struct PolicyCoeffs {
    double alpha = 0.0;
    double a_plus = 0.0, a_minus = 0.0;
    static constexpr int J = 14;
    double binom[J + 1]; // binom(-alpha-1, j)

    PolicyCoeffs() = default;
    PolicyCoeffs(double alpha_, double ap, double am) : alpha(alpha_), a_plus(ap), a_minus(am) {
        binom[0] = 1.0;
        for (int j = 1; j <= J; ++j)
            binom[j] = binom[j - 1] * (-(alpha + 1.0) - (j - 1)) / j;
    }

    // drift when jumps >= delta are simulated raw:
    // comp(delta) + int_0^delta l [(r+ - a+ nu) - (r- - a- nu)] dl
    double drift(double y, double delta) const {
        const double a = alpha;
        const double comp = -(a_plus - a_minus) * std::pow(delta, 1.0 - a) / (a - 1.0);
        const double w = delta / y;
        double corr;
        if (w <= 0.2) {
            corr = 0.0;
            double wp = std::pow(w, 2.0 - a); // w^{j+1-a} starting at j=1
            for (int j = 1; j <= J; ++j) {
                const double cj = a_plus * binom[j] - a_minus * binom[j] * ((j & 1) ? -1.0 : 1.0);
                corr += cj * wp / (j + 1.0 - a);
                wp *= w;
            }
            corr *= std::pow(y, 1.0 - a);
        } else {
            const double ap1 = a + 1.0;
            // expm1/log1p: the naive (1 +- l/y)^{-a-1} - 1 cancels badly near
            // l = 0 and puts a noise floor on the quadrature error estimate
            auto core = [&](double l) {
                double v = a_plus * std::pow(l, -a) * std::expm1(-ap1 * std::log1p(l / y));
                v -= a_minus * std::pow(l, -a) * std::expm1(-ap1 * std::log1p(-l / y));
                return v;
            };
            if (delta <= y / 2.0) {
                corr = integrate_sing0(core, delta, 1e-10);
            } else {
                // the down rate vanishes beyond y/2; split at the indicator
                // edge and walk the remainder in decades so the recursion
                // depth stays bounded when delta spans many orders of y
                corr = integrate_sing0(core, y / 2.0, 1e-10);
                auto above = [&](double l) {
                    return a_plus * std::pow(l, -a) * std::expm1(-ap1 * std::log1p(l / y)) +
                           a_minus * std::pow(l, -a);
                };
                for (double lo = y / 2.0; lo < delta;) {
                    const double hi = std::min(delta, 10.0 * lo);
                    corr += integrate(above, lo, hi, 1e-10);
                    lo = hi;
                }
            }
        }
        return comp + corr;
    }

    // variance of the dropped sub-delta jumps: int_0^delta l^2 (r+ + r-) dl
    double sigma2(double y, double delta) const {
        const double a = alpha;
        const double w = delta / y;
        if (w <= 0.2) {
            double s = 0.0;
            double wp = std::pow(w, 2.0 - a);
            for (int j = 0; j <= J; ++j) {
                const double cj = a_plus * binom[j] + a_minus * binom[j] * ((j & 1) ? -1.0 : 1.0);
                s += cj * wp / (j + 2.0 - a);
                wp *= w;
            }
            return s * std::pow(y, 2.0 - a);
        }
        const double ap1 = a + 1.0;
        double s = integrate_sing0([&](double l) {
            double v = a_plus * std::pow(l, 1.0 - a) * std::pow(1.0 + l / y, -ap1);
            if (l < y / 2.0) v += a_minus * std::pow(l, 1.0 - a) * std::pow(1.0 - l / y, -ap1);
            return v;
        }, std::min(delta, 0.499999 * y), 1e-10);
        // the down rate ends at y/2; the up side continues out to delta
        for (double lo = 0.499999 * y; lo < delta;) {
            const double hi = std::min(delta, 10.0 * lo);
            s += integrate([&](double l) {
                return a_plus * std::pow(l, 1.0 - a) * std::pow(1.0 + l / y, -ap1);
            }, lo, hi, 1e-10);
            lo = hi;
        }
        return s;
    }

    // int_{b1}^{b2} l^q r_pm(y,l) dl for b2 <= 0.35*y (series regime);
    // used for sub-cutoff offspring intensities and dust moments.
    double band_moment(double q, double y, double b1, double b2, bool up, bool dn) const {
        const double a = alpha;
        const double w1 = b1 / y, w2 = b2 / y;
        double s = 0.0;
        double p1 = std::pow(w1, q - a), p2 = std::pow(w2, q - a);
        for (int j = 0; j <= J; ++j) {
            const double sgn = (j & 1) ? -1.0 : 1.0;
            const double cj = (up ? a_plus * binom[j] : 0.0) + (dn ? a_minus * binom[j] * sgn : 0.0);
            const double e = j + q - a;
            s += cj * (p2 - p1) / e;
            p1 *= w1;
            p2 *= w2;
        }
        return s * std::pow(y, q - a);
    }
};

// ---------------------------------------------------------------------------
// Dust: exact conditional means of sub-enumeration offspring, integrated
// against occupation moments occ[m] = sum over substeps of h * y^{-m}.
// Returns int_{t1}^{t2} l^q rate(y,l) dl folded over the occupation.

inline double dust_integral(const PolicyCoeffs& pc, double q, double t1, double t2, bool up,
                            bool dn, const double occ[4]) {
    if (!(t2 > t1) || t2 <= 0.0) return 0.0;
    const double a = pc.alpha;
    double p1 = t1 > 0.0 ? std::pow(t1, q - a) : (q > a ? 0.0 : throw std::domain_error(
                                                      "dust_integral: divergent at 0")),
           p2 = std::pow(t2, q - a);
    double s = 0.0;
    for (int j = 0; j <= 3; ++j) {
        const double sgn = (j & 1) ? -1.0 : 1.0;
        const double cj = (up ? pc.a_plus * pc.binom[j] : 0.0) +
                          (dn ? pc.a_minus * pc.binom[j] * sgn : 0.0);
        s += cj * (p2 - p1) / (q + j - a) * occ[j];
        p1 *= t1;
        p2 *= t2;
    }
    return s;
}

// cutoff (and enumeration top) as a function of the quantized band index
struct DustGrid {
    double grid_floor = 0.0;
    double rel_cutoff = 0.0;
    double enum_floor = 0.0;
    static constexpr int NB = 200;

    double top(int k) const {
        const double g = grid_floor * std::pow(2.0, 0.25 * k);
        const double d = std::min(rel_cutoff * g, 0.45 * g);
        return enum_floor > 0.0 ? std::min(enum_floor, d) : d;
    }
};

// ---------------------------------------------------------------------------

struct SamplerOptions {
    double abs_cutoff = 1e-4;  // fixed cutoff when rel_cutoff == 0
    double rel_cutoff = 0.0;   // cutoff = rel_cutoff * (band low edge)
    bool gaussian = false;     // small-jump Gaussian substitute
    double eta = 0.01;         // Euler guard: h <= min(eta, eta*y/|b|, eta*y^2/s2)
    double band = 1.3;         // dominating-envelope band half-width factor
    // when > 0 (with rel_cutoff > 0): bands snap to the quarter-dyadic grid
    // grid_floor * 2^{k/4}, so the cutoff is a known function of the band index
    double grid_floor = 0.0;
    // when > 0: sub-cutoff births with size >= enum_floor are delivered to the
    // observer via sub_birth (no state change; their aggregate effect on y is
    // already carried by the drift/Gaussian terms)
    double enum_floor = 0.0;
    long max_ops = 4'000'000'000L;
};

enum class StopReason { horizon, floor, ceiling, requested, ops_budget };

struct SimResult {
    double y = 0.0;
    double t = 0.0;
    StopReason reason = StopReason::horizon;
    long proposals = 0;
    long substeps = 0;
};

struct StepControl {
    double y_post;
    bool stop = false;
};

// Minimal observer; tree growth and diagnostics plug in richer ones.
// substep is called before each Euler move; moved after it (return true to
// stop); sub_birth delivers accepted sub-cutoff offspring proposals (the
// state itself does not move, its sub-cutoff dynamics being carried by the
// drift/Gaussian terms); jump delivers real jumps and chooses the post-state.
struct NullObserver {
    void substep(double, double, double, double, int) {}
    bool moved(double, double) { return false; }
    void sub_birth(double, double, double, int) {}
    StepControl jump(double, double y_pre, double l, int sign) {
        return {sign > 0 ? y_pre + l : y_pre - l, false};
    }
};

template <class Obs>
SimResult simulate_policy(const DiskRates& rates, double y0, double horizon, double floor,
                          double ceiling, const SamplerOptions& opt, Rng& rng, Obs&& obs) {
    if (!(y0 > floor) || floor < 0.0) throw std::domain_error("simulate_policy: need y0 > floor >= 0");
    const double a = rates.alpha;
    const double ap1 = a + 1.0;
    const double two_ap1 = std::pow(2.0, ap1);
    const PolicyCoeffs pc(a, rates.a_plus, rates.a_minus);
    const double envelope_total = rates.a_plus + two_ap1 * rates.a_minus;
    const bool rel = opt.rel_cutoff > 0.0;
    const double inf = std::numeric_limits<double>::infinity();

    SimResult res;
    double y = y0, t = 0.0;
    long ops = 0;
    // with no floor the state can only decay toward zero once it is far below
    // the cutoff (the jump rates scale like y^{a+1}); absorb it there instead
    // of grinding the drift quadrature down into the denormals
    const double ymin = std::max(floor, 1e-12);

    for (;;) {
        // freeze a band, its cutoff and its dominating rate
        double ylo, yhi, delta;
        int band_idx = -1;
        if (rel) {
            if (opt.grid_floor > 0.0) {
                // quarter-dyadic grid anchored at grid_floor: the cutoff is a
                // fixed, known function of the band index
                int k = (int)std::floor(4.0 * std::log2(y / opt.grid_floor));
                if (k < 0) k = 0;
                ylo = opt.grid_floor * std::pow(2.0, 0.25 * k);
                if (y < ylo && k > 0) { --k; ylo = opt.grid_floor * std::pow(2.0, 0.25 * k); }
                yhi = ylo * 1.18920711500272103; // 2^{1/4}
                band_idx = k;
            } else {
                ylo = y / opt.band;
                yhi = y * opt.band;
            }
            delta = std::min(opt.rel_cutoff * ylo, 0.45 * ylo);
        } else {
            ylo = 0.0;
            yhi = inf;
            delta = opt.abs_cutoff;
        }
        const double lam1 = envelope_total > 0.0 ? envelope_total / a * std::pow(delta, -a) : 0.0;
        const bool has_enum = opt.enum_floor > 0.0 && opt.enum_floor < delta;
        const double pe = has_enum ? std::pow(opt.enum_floor, -a) : 0.0;
        const double pd = has_enum ? std::pow(delta, -a) : 0.0;
        const double lam2 = has_enum ? envelope_total / a * (pe - pd) : 0.0;
        const double lam = lam1 + lam2;
        // drift/variance: linear interpolation across a finite band
        double b0 = 0.0, bs = 0.0, s20 = 0.0, s2s = 0.0;
        if (rel) {
            b0 = pc.drift(ylo, delta);
            bs = (pc.drift(yhi, delta) - b0) / (yhi - ylo);
            if (opt.gaussian) {
                s20 = pc.sigma2(ylo, delta);
                s2s = (pc.sigma2(yhi, delta) - s20) / (yhi - ylo);
            }
        }
        bool band_exit = false;
        while (!band_exit) {
            const double tau = lam > 0.0 ? rng.exponential(lam) : inf;
            double rem = tau;
            while (rem > 0.0) {
                const double b = rel ? b0 + bs * (y - ylo) : pc.drift(y, delta);
                const double s2 = opt.gaussian ? (rel ? s20 + s2s * (y - ylo) : pc.sigma2(y, delta))
                                               : 0.0;
                if (++ops > opt.max_ops) { res.reason = StopReason::ops_budget; goto done; }
                // the bare eta cap is not scale covariant; in relative mode the
                // state-relative guards below do the limiting
                double h = rel ? rem : std::min(rem, opt.eta);
                if (b != 0.0) h = std::min(h, opt.eta * y / std::fabs(b));
                if (s2 > 0.0) h = std::min(h, opt.eta * y * y / s2);
                if (t + h > horizon) h = horizon - t;
                if (h <= 0.0) { res.reason = StopReason::horizon; goto done; }
                ++res.substeps;
                obs.substep(t, y, h, delta, band_idx);
                double ynew = y + b * h;
                if (s2 > 0.0) ynew += std::sqrt(s2 * h) * rng.normal();
                t += h;
                rem -= h;
                if (ynew <= ymin) {
                    // drift/diffusion crossing stops exactly at the floor
                    y = ymin; res.reason = StopReason::floor; goto done;
                }
                if (s2 > 0.0 && std::min(y, ynew) < ymin + 4.0 * std::sqrt(s2 * h)) {
                    // Brownian-bridge check for an unobserved floor crossing
                    const double pcross = std::exp(-2.0 * (y - ymin) * (ynew - ymin) / (s2 * h));
                    if (rng.uniform() < pcross) { y = ymin; res.reason = StopReason::floor; goto done; }
                }
                y = ynew;
                if (obs.moved(t, y)) { res.reason = StopReason::requested; goto done; }
                if (y >= ceiling) { res.reason = StopReason::ceiling; goto done; }
                if (t >= horizon) { res.reason = StopReason::horizon; goto done; }
                // leaving the band refreezes the envelope; a still-pending
                // exponential clock (rem > 0) can be discarded by
                // memorylessness. If the clock has already rung (rem == 0)
                // the arrival must be evaluated at the current state: the
                // acceptance ratios are <= 1 everywhere, so the frozen
                // envelope still dominates, and dropping rung arrivals would
                // lose true intensity at the band-switch frequency
                if (y < ylo || y > yhi) {
                    band_exit = true;
                    if (rem > 0.0) break;
                }
            }
            if (band_exit && rem > 0.0) break;

            // proposal from the dominating envelope
            ++res.proposals;
            if (++ops > opt.max_ops) { res.reason = StopReason::ops_budget; goto done; }
            const bool from_enum = lam2 > 0.0 && rng.uniform() * lam < lam2;
            const double l = from_enum
                                 ? std::pow(pe - rng.uniform() * (pe - pd), -1.0 / a)
                                 : delta * std::pow(rng.uniform(), -1.0 / a);
            const bool propose_up = rng.uniform() < rates.a_plus / envelope_total;
            if (propose_up) {
                const double acc = std::pow(y / (y + l), ap1);
                assert(acc <= 1.0);
                if (rng.uniform() < acc) {
                    if (from_enum) { obs.sub_birth(t, y, l, +1); continue; }
                    StepControl c = obs.jump(t, y, l, +1);
                    y = c.y_post;
                    if (c.stop) { res.reason = StopReason::requested; goto done; }
                    if (y >= ceiling) { res.reason = StopReason::ceiling; goto done; }
                    break; // recompute band
                }
            } else if (l < y / 2.0) {
                const double acc = std::pow(y / (y - l), ap1) / two_ap1;
                assert(acc <= 1.0);
                if (rng.uniform() < acc) {
                    if (from_enum) { obs.sub_birth(t, y, l, -1); continue; }
                    StepControl c = obs.jump(t, y, l, -1);
                    y = c.y_post;
                    if (c.stop) { res.reason = StopReason::requested; goto done; }
                    if (y <= ymin) { res.reason = StopReason::floor; goto done; }
                    break; // recompute band
                }
            }
        }
    }
done:
    res.y = y;
    res.t = t;
    return res;
}

// ---------------------------------------------------------------------------
// Spec-facing samplers recording event lists.

struct DiskPath {
    double y0 = 0.0;
    double floor = 0.0;
    std::vector<JumpEvent> events;       // with post-state packed below
    std::vector<double> post_states;     // parallel to events
    std::vector<double> pre_states;
    double terminal = 0.0;
    double duration = 0.0;
    StopReason reason = StopReason::horizon;
};

inline DiskPath sample_disk_policy(const DiskRates& rates, double y0, double horizon,
                                   double floor, double delta_cut, Rng& rng,
                                   SamplerOptions opt = {}) {
    opt.abs_cutoff = delta_cut;
    struct Rec {
        DiskPath* p;
        void substep(double, double, double, double, int) {}
        bool moved(double, double) { return false; }
        void sub_birth(double, double, double, int) {}
        StepControl jump(double t, double y_pre, double l, int sign) {
            const double post = sign > 0 ? y_pre + l : y_pre - l;
            p->events.push_back({t, l, sign, JumpSide::none,
                                 sign > 0 ? JumpKind::loop : JumpKind::split});
            p->pre_states.push_back(y_pre);
            p->post_states.push_back(post);
            return {post, false};
        }
    };
    DiskPath path;
    path.y0 = y0;
    path.floor = floor;
    Rec rec{&path};
    SimResult r = simulate_policy(rates, y0, horizon, floor,
                                  std::numeric_limits<double>::infinity(), opt, rng, rec);
    path.terminal = r.y;
    path.duration = r.t;
    path.reason = r.reason;
    return path;
}

// Half-plane pair: two independent truncated stable paths with loop/split tags.
struct HalfPlanePair {
    SkeletonPath L, R;
    std::vector<JumpEvent> tagged; // merged, sides and kinds assigned
};

inline HalfPlanePair sample_halfplane(const AsymmetrySplit& split, double alpha, double T,
                                      double delta_cut, Rng& rng) {
    HalfPlanePair hp;
    Rng rl(derive_key(rng.next_u64(), 1)), rr(derive_key(rng.next_u64(), 2));
    hp.L = sample_path({alpha, split.a_lp, split.a_lm}, T, delta_cut, 0.0, rl);
    hp.R = sample_path({alpha, split.a_rp, split.a_rm}, T, delta_cut, 0.0, rr);
    for (auto j : hp.L.jumps) {
        j.side = JumpSide::left;
        j.kind = j.sign > 0 ? JumpKind::loop : JumpKind::split;
        hp.tagged.push_back(j);
    }
    for (auto j : hp.R.jumps) {
        j.side = JumpSide::right;
        j.kind = j.sign > 0 ? JumpKind::loop : JumpKind::split;
        hp.tagged.push_back(j);
    }
    std::sort(hp.tagged.begin(), hp.tagged.end(),
              [](const JumpEvent& a, const JumpEvent& b) { return a.time < b.time; });
    return hp;
}

// ---------------------------------------------------------------------------
// Chordal pair (L,R): half-plane rates reweighted by (Delta/Delta_after)^{a+1}.
// Under the reweighted law a swallowing jump (size >= side) has zero rate.

struct ChordalResult {
    double L, R, t;
    StopReason reason;
    std::vector<JumpEvent> events; // side/kind tagged, pre/post states below
    std::vector<double> pre_L, pre_R;
};

// floor is per side: exploration stops when either side is swallowed down to
// it. A positive floor also bounds the work: near-swallowed sides make both
// the cutoff shrink and the rejection envelope blow up.
inline ChordalResult sample_disk_chordal(const AsymmetrySplit& split, double alpha, double L0,
                                         double R0, double horizon, double delta_cut, Rng& rng,
                                         double floor = 0.0, double eta = 0.01) {
    if (!(L0 > 0.0 && R0 > 0.0)) throw std::domain_error("sample_disk_chordal: L0,R0 > 0");
    const double a = alpha, ap1 = a + 1.0;
    const PolicyCoeffs up_l(a, split.a_lp, split.a_lm);
    const PolicyCoeffs up_r(a, split.a_rp, split.a_rm);
    ChordalResult res{L0, R0, 0.0, StopReason::horizon, {}, {}, {}};
    double L = L0, R = R0, t = 0.0;

    auto side_drift = [&](const PolicyCoeffs& pcs, double delta, double Delta) {
        // comp + int_0^delta l [ a_p((D/(D+l))^{a+1}-1) - a_m((D/(D-l))^{a+1}-1) ] nu(dl)
        const double comp = -(pcs.a_plus - pcs.a_minus) * std::pow(delta, 1.0 - a) / (a - 1.0);
        const double w = delta / Delta;
        double corr = 0.0;
        double wp = std::pow(w, 2.0 - a);
        // (1+s)^{-a-1}-1 and (1-s)^{-a-1}-1 series
        for (int j = 1; j <= PolicyCoeffs::J; ++j) {
            const double sgn = (j & 1) ? -1.0 : 1.0;
            const double cj = pcs.a_plus * up_l.binom[j] - pcs.a_minus * up_l.binom[j] * sgn;
            corr += cj * wp / (j + 1.0 - a);
            wp *= w;
        }
        return comp + corr * std::pow(Delta, 1.0 - a);
    };

    for (;;) {
        const double B = 1.3;
        const double Llo = L / B, Rlo = R / B;
        const double Delta = L + R;
        const double delta = std::min(delta_cut, 0.2 * std::min(Llo, Rlo));
        // envelopes: up <= a_sp nu; down-left weight <= ((L+R)B / Rlo)^{a+1}
        const double WL = std::pow(Delta * B / Rlo, ap1);
        const double WR = std::pow(Delta * B / Llo, ap1);
        const double env[4] = {split.a_lp, split.a_lm * WL, split.a_rp, split.a_rm * WR};
        double env_tot = env[0] + env[1] + env[2] + env[3];
        const double lam = env_tot / a * std::pow(delta, -a);
        bool band_exit = false;
        while (!band_exit) {
            double rem = rng.exponential(lam);
            while (rem > 0.0) {
                const double bl = side_drift(up_l, delta, L + R);
                const double br = side_drift(up_r, delta, L + R);
                double h = std::min({rem, eta,
                                     bl != 0.0 ? eta * L / std::fabs(bl) : rem,
                                     br != 0.0 ? eta * R / std::fabs(br) : rem});
                if (t + h > horizon) h = horizon - t;
                if (h <= 0.0) { res.reason = StopReason::horizon; goto done; }
                L += bl * h;
                R += br * h;
                t += h;
                rem -= h;
                if (L <= floor || R <= floor || L <= 0.0 || R <= 0.0) { res.reason = StopReason::floor; goto done; }
                if (t >= horizon) { res.reason = StopReason::horizon; goto done; }
                if (L < Llo || L > Llo * B * B || R < Rlo || R > Rlo * B * B) { band_exit = true; break; }
            }
            if (band_exit) break;
            const double l = delta * std::pow(rng.uniform(), -1.0 / a);
            double pick = rng.uniform() * env_tot;
            int ch = 0;
            while (ch < 3 && pick > env[ch]) { pick -= env[ch]; ++ch; }
            const double D = L + R;
            const bool left = ch < 2;
            const bool up = (ch == 0 || ch == 2);
            double acc, Lp = L, Rp = R;
            if (up) {
                acc = std::pow(D / (D + l), ap1);
                (left ? Lp : Rp) += l;
            } else {
                const double side = left ? L : R;
                if (l >= side) continue; // zero rate under the reweighted law
                acc = std::pow(D / (D - l), ap1) / (left ? WL : WR);
                (left ? Lp : Rp) -= l;
            }
            assert(acc <= 1.0 + 1e-12);
            if (rng.uniform() < acc) {
                res.events.push_back({t, l, up ? +1 : -1, left ? JumpSide::left : JumpSide::right,
                                      up ? JumpKind::loop : JumpKind::split});
                res.pre_L.push_back(L);
                res.pre_R.push_back(R);
                L = Lp;
                R = Rp;
                if (L <= floor || R <= floor) { res.reason = StopReason::floor; goto done; }
                break;
            }
        }
    }
done:
    res.L = L;
    res.R = R;
    res.t = t;
    return res;
}

// Radon-Nikodym weight of the chordal/conditioned law against the free one.
inline double rn_weight(double delta0, double delta_t, double alpha) {
    return std::pow(delta0 / delta_t, alpha + 1.0);
}

} // namespace fragx
