#pragma once

#include <array>
#include <cstring>
#include <thread>

#include "fragexplore/quadrature.hpp"
#include "fragexplore/stats.hpp"
#include "fragexplore/tree.hpp"

namespace fragx {

// Malthusian machinery and the natural carpet measure: cascade martingales,
// the exponent delta = alpha + 1/2, intrinsic-area and loop-count estimators,
// and empirical stopping-line measures.

struct EstimatorReport {
    double estimate = 0.0;
    double std_error = 0.0;
    long n = 0;
    std::uint64_t seed = 0;
    double truncated_fraction = 0.0;
    bool valid = true;
};

struct MalthusGridPoint {
    double q, estimate, se;
};

struct MalthusReport {
    double analytic_delta = 0.0;
    double mc_root = 0.0;
    double mc_root_se = 0.0;
    bool se_valid = true; // n >= 30 guard
    double cumulant_residual_at_delta = 0.0;
    std::vector<MalthusGridPoint> grid;
};

struct CascadeState {
    int depth = 0;
    double M = 0.0;
    double exponent = 0.0;
    double line_floor = 0.0;
};

namespace detail {

template <class Fn>
void parallel_blocks(long n, int threads, Fn fn) {
    if (threads <= 1 || n < 2) {
        fn(0L, n, 0);
        return;
    }
    std::vector<std::thread> workers;
    const long chunk = (n + threads - 1) / threads;
    for (int w = 0; w < threads; ++w) {
        const long b = w * chunk, e = std::min(n, b + chunk);
        if (b >= e) break;
        workers.emplace_back([=]() { fn(b, e, w); });
    }
    for (auto& t : workers) t.join();
}

} // namespace detail

// ---------------------------------------------------------------------------
// Exit-interval ensembles: single-particle trees stopped at exit of (lo, hi),
// offspring frozen at birth. Labels are kept per tree so that moment sums can
// be re-evaluated at any exponent (common random numbers across q).

struct ExitTreeRecord {
    std::vector<double> labels_T;    // split pieces + terminal (the T line)
    std::vector<double> labels_loop; // positive-jump offspring (Ttilde only)
    double occ[4] = {0, 0, 0, 0};    // occupation moments for dust
    double l0 = 0.0;                 // largest label on the line
    long n_loops = 0;
};

struct ExitEnsemble {
    KappaRelations rel;
    DiskRates rates;
    double delta_cut = 0.0; // absolute cutoff = dust top
    Variant variant = Variant::Ttilde;
    std::uint64_t seed = 0;
    bool keep_labels = true;
    std::vector<ExitTreeRecord> trees;
};

namespace detail {

struct ExitCollector : NullCollector {
    ExitTreeRecord* rec = nullptr;
    bool keep_labels = true;
    void label(int, double m, Provenance p, bool skel) {
        rec->l0 = std::max(rec->l0, m);
        if (p == Provenance::loop_jump) {
            ++rec->n_loops;
            if (keep_labels) rec->labels_loop.push_back(m);
        } else if (skel && keep_labels) {
            rec->labels_T.push_back(m);
        }
    }
    void occupation(int, bool, int, double h, double y, double) {
        const double iy = 1.0 / y;
        rec->occ[0] += h;
        rec->occ[1] += h * iy;
        rec->occ[2] += h * iy * iy;
        rec->occ[3] += h * iy * iy * iy;
    }
};

} // namespace detail

inline ExitEnsemble sample_exit_ensemble(double kappa, long n_trees, std::uint64_t seed,
                                         Variant variant = Variant::Ttilde,
                                         double delta_cut = 0.005, int threads = 1,
                                         bool keep_labels = true, double eta = 0.02) {
    ExitEnsemble ens;
    ens.rel = derive_relations(kappa);
    ens.rates = {ens.rel.alpha, ens.rel.u, 1.0, DiskMode::policy};
    ens.delta_cut = delta_cut;
    ens.variant = variant;
    ens.seed = seed;
    ens.keep_labels = keep_labels;
    ens.trees.resize(n_trees);

    GrowConfig cfg;
    cfg.rates = ens.rates;
    cfg.variant = variant;
    cfg.stop.kind = StopRule::Kind::exit_interval;
    cfg.stop.lo = 0.5;
    cfg.stop.hi = 2.0;
    cfg.opt.abs_cutoff = delta_cut;
    cfg.opt.gaussian = true;
    cfg.opt.eta = eta;

    detail::parallel_blocks(n_trees, threads, [&](long b, long e, int) {
        detail::ExitCollector col;
        col.keep_labels = keep_labels;
        for (long i = b; i < e; ++i) {
            col.rec = &ens.trees[i];
            grow_tree_stream(cfg, derive_key(seed, (std::uint64_t)i, 0xE1u), col);
        }
    });
    return ens;
}

enum class LabelSet { T_labels, Ttilde_labels };

// per-tree Sigma label^q, completed by the analytic sub-cutoff dust
inline std::vector<double> per_tree_moments(const ExitEnsemble& ens, double q, LabelSet set) {
    if (!ens.keep_labels) throw std::domain_error("per_tree_moments: labels were not stored");
    const PolicyCoeffs pc(ens.rel.alpha, ens.rates.a_plus, ens.rates.a_minus);
    std::vector<double> out(ens.trees.size());
    for (size_t i = 0; i < ens.trees.size(); ++i) {
        const auto& tr = ens.trees[i];
        double s = 0.0;
        for (double l : tr.labels_T) s += std::pow(l, q);
        s += dust_integral(pc, q, 0.0, ens.delta_cut, false, true, tr.occ);
        if (set == LabelSet::Ttilde_labels) {
            for (double l : tr.labels_loop) s += std::pow(l, q);
            s += dust_integral(pc, q, 0.0, ens.delta_cut, true, false, tr.occ);
        }
        out[i] = s;
    }
    return out;
}

inline EstimatorReport moment_sum(const ExitEnsemble& ens, double q, LabelSet set) {
    if (ens.trees.empty()) throw std::domain_error("moment_sum: empty ensemble");
    if (!(q > ens.rel.alpha)) throw std::domain_error("moment_sum: need q > alpha");
    const auto vals = per_tree_moments(ens, q, set);
    EstimatorReport rep;
    const MeanSe ms = mean_se(vals);
    rep.estimate = ms.mean;
    rep.std_error = jackknife_se(vals, [](double m) { return m; });
    rep.n = ms.n;
    rep.seed = ens.seed;
    rep.valid = rep.n >= 30;
    return rep;
}

// ---------------------------------------------------------------------------
// Analytic cumulant of the policy cascade at exponent q: jump terms above eps
// plus q times the truncated simulation drift at state 1; the Malthusian
// exponent is its root. Extrapolated to eps -> 0 by Richardson elimination of
// the known boundary modes eps^{q-alpha}, eps^{2-alpha}, ...

inline double cumulant_residual_raw(double q, const KappaRelations& rel, double eps) {
    const double a = rel.alpha, u = rel.u;
    const PolicyCoeffs pc(a, u, 1.0);
    // up jumps, split at l = 1; substituting s = 1/l maps the far tail to
    // ((1+s)^q - s^q) s^{2a-q} / (1+s)^{a+1} on (0,1], regular for q < 2a.
    // (1+l)^q - 1 and (1-l)^q - 1 go through expm1/log1p: near l = 0 the
    // naive forms lose ~5 digits to cancellation, which puts a noise floor
    // on the quadrature error estimate far above the requested tolerance
    const double up_low = integrate(
        [&](double l) {
            return std::expm1(q * std::log1p(l)) * std::pow(l * (1.0 + l), -a - 1.0);
        },
        eps, 1.0, 1e-9);
    const double up_high = integrate_sing0(
        [&](double s) {
            return (std::pow(1.0 + s, q) - std::pow(s, q)) * std::pow(s, 2.0 * a - q) /
                   std::pow(1.0 + s, a + 1.0);
        },
        1.0, 1e-9);
    const double dn = integrate(
        [&](double l) {
            return (std::pow(l, q) + std::expm1(q * std::log1p(-l))) *
                   std::pow(l * (1.0 - l), -a - 1.0);
        },
        eps, 0.5, 1e-9);
    return u * (up_low + up_high) + dn + q * pc.drift(1.0, eps);
}

namespace detail {

// solve r(eps_i) = R + sum_m c_m eps_i^{e_m} for R by Gaussian elimination
inline double richardson_limit(const std::vector<double>& epses, const std::vector<double>& vals,
                               const std::vector<double>& modes) {
    const int n = (int)epses.size();
    std::vector<std::vector<double>> A(n, std::vector<double>(n + 1, 0.0));
    for (int i = 0; i < n; ++i) {
        A[i][0] = 1.0;
        for (int m = 0; m < n - 1; ++m) A[i][m + 1] = std::pow(epses[i], modes[m]);
        A[i][n] = vals[i];
    }
    for (int c = 0; c < n; ++c) {
        int piv = c;
        for (int r = c + 1; r < n; ++r)
            if (std::fabs(A[r][c]) > std::fabs(A[piv][c])) piv = r;
        std::swap(A[c], A[piv]);
        if (A[c][c] == 0.0) throw std::runtime_error("cumulant extrapolation-unstable: singular");
        for (int r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = A[r][c] / A[c][c];
            for (int k = c; k <= n; ++k) A[r][k] -= f * A[c][k];
        }
    }
    return A[0][n] / A[0][0];
}

inline std::vector<double> cumulant_modes(double q, double alpha) {
    std::vector<double> raw = {q - alpha, 2.0 - alpha, q + 1.0 - alpha, 3.0 - alpha, 2.0};
    std::sort(raw.begin(), raw.end());
    std::vector<double> out;
    for (double e : raw) {
        if (!out.empty() && e - out.back() < 0.05) continue; // merge near-degenerate modes
        out.push_back(e);
    }
    return out;
}

} // namespace detail

inline double cumulant_residual(double q, const KappaRelations& rel, double eps = 1e-5) {
    if (!(q > rel.alpha && q < 2.0 * rel.alpha + 1.0))
        throw std::domain_error("cumulant_residual: q outside (alpha, 2*alpha+1)");
    if (!(eps > 0.0 && eps < 0.25))
        throw std::domain_error("cumulant_residual: eps outside (0, 1/4)");
    const std::vector<double> modes = detail::cumulant_modes(q, rel.alpha);
    // node ladder eps * sqrt(10)^j, finest first
    std::vector<double> nodes, vals;
    for (int j = 0; j < 6; ++j) nodes.push_back(eps * std::pow(10.0, 0.5 * j));
    for (double e : nodes) vals.push_back(cumulant_residual_raw(q, rel, e));
    const int m = std::min((int)modes.size(), 4);
    const int n = m + 1; // nodes per solve
    std::vector<double> e1(nodes.begin(), nodes.begin() + n);
    std::vector<double> v1(vals.begin(), vals.begin() + n);
    std::vector<double> e2(nodes.begin() + 1, nodes.begin() + n + 1);
    std::vector<double> v2(vals.begin() + 1, vals.begin() + n + 1);
    const double r1 = detail::richardson_limit(e1, v1, modes);
    const double r2 = detail::richardson_limit(e2, v2, modes);
    if (std::fabs(r1 - r2) > 1e-5)
        throw std::runtime_error("cumulant extrapolation-unstable");
    return r1;
}

// bisection root of the extrapolated cumulant in q
inline double cumulant_root(const KappaRelations& rel, double q_lo, double q_hi) {
    double flo = cumulant_residual(q_lo, rel), fhi = cumulant_residual(q_hi, rel);
    if (flo * fhi > 0.0) throw std::runtime_error("cumulant_root: no sign change in bracket");
    for (int it = 0; it < 60; ++it) {
        const double m = 0.5 * (q_lo + q_hi);
        if (m <= q_lo || m >= q_hi) break;
        const double fm = cumulant_residual(m, rel);
        if ((fm < 0.0) == (flo < 0.0)) {
            q_lo = m;
            flo = fm;
        } else {
            q_hi = m;
        }
        if (q_hi - q_lo < 1e-6) break;
    }
    return 0.5 * (q_lo + q_hi);
}

inline MalthusReport malthus_root_mc(const ExitEnsemble& ens, int grid_points = 12,
                                     int n_boot = 200) {
    if (ens.trees.empty()) throw std::domain_error("malthus_root_mc: empty ensemble");
    const double a = ens.rel.alpha;
    MalthusReport rep;
    rep.analytic_delta = ens.rel.malthus_delta;
    rep.cumulant_residual_at_delta = cumulant_residual(rep.analytic_delta, ens.rel);

    auto mean_at = [&](double q) {
        const auto v = per_tree_moments(ens, q, LabelSet::T_labels);
        return mean_se(v).mean;
    };
    double lo = a + 0.05, hi = 2.0 * a + 0.9;
    if (mean_at(lo) < 1.0)
        throw std::runtime_error("malthus_root_mc: bracket failure (moment sum < 1 near alpha)");
    while (mean_at(hi) > 1.0 && hi < 2.0 * a + 0.99) hi += 0.02;
    for (int it = 0; it < 40; ++it) {
        const double m = 0.5 * (lo + hi);
        (mean_at(m) > 1.0 ? lo : hi) = m;
        if (hi - lo < 2e-4) break;
    }
    rep.mc_root = 0.5 * (lo + hi);

    // bootstrap of the locally linearized root
    const double q0 = rep.mc_root, q1 = rep.mc_root + 0.05;
    const auto m0 = per_tree_moments(ens, q0, LabelSet::T_labels);
    const auto m1 = per_tree_moments(ens, q1, LabelSet::T_labels);
    const long n = (long)m0.size();
    rep.se_valid = n >= 30;
    Rng brng(derive_key(ens.seed, 0xB007u));
    std::vector<double> roots(n_boot);
    for (int b = 0; b < n_boot; ++b) {
        double s0 = 0.0, s1 = 0.0;
        for (long i = 0; i < n; ++i) {
            const long j = (long)(brng.uniform() * n);
            s0 += m0[j];
            s1 += m1[j];
        }
        s0 /= n;
        s1 /= n;
        const double slope = (s1 - s0) / (q1 - q0);
        roots[b] = slope != 0.0 ? q0 - (s0 - 1.0) / slope : q0;
    }
    const MeanSe bs = mean_se(roots);
    rep.mc_root_se = bs.se * std::sqrt((double)n_boot); // sd of the bootstrap law

    for (int g = 0; g < grid_points; ++g) {
        const double q = a + 0.1 + (2.0 - a - 0.15) * g / (grid_points - 1.0);
        const auto v = per_tree_moments(ens, q, LabelSet::T_labels);
        const MeanSe ms = mean_se(v);
        rep.grid.push_back({q, ms.mean, ms.se});
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Mass-floor ensembles: streaming skeleton (or fully grown Ttilde) trees with
// per-line moment sums, loop-count bands, and stopping-line histograms, all
// dust-completed.

struct FloorConfig {
    double kappa = 3.0;
    std::vector<double> lines;   // descending, last entry is the stop floor
    bool grow_loops = true;      // false: record loop births, skeleton only
    long n_trees = 0;
    std::uint64_t seed = 0;
    int threads = 1;
    double rel_cutoff = 0.085;
    double eta = 0.02;
    double cascade_q = 0.0;      // 0 -> alpha + 1/2
    std::vector<std::pair<double, double>> count_bands; // skeleton positive-jump sizes
    std::vector<int> nu_lines;   // indices into lines getting label histograms
    int nu_bins = 10;
    double nu_res = 0.02;        // relative resolution: labels below nu_res*y dropped
    long budget = 4'000'000;
    long max_ops = 4'000'000'000L;
};

struct FloorTreeRecord {
    std::vector<double> sum2_L;  // per line: Sigma label^2, all labels
    std::vector<double> sum2_T;  // per line: Sigma label^2, T-line labels
    std::vector<double> casc_T;  // per line: Sigma label^cascade_q, T-line labels
    std::vector<double> counts;  // per count band
    std::vector<double> nu;      // nu_lines.size() * nu_bins label counts
    bool truncated = false;
    double trunc_frac = 0.0;
};

struct FloorEnsemble {
    KappaRelations rel;
    FloorConfig cfg;
    double cascade_q = 0.0;
    std::vector<FloorTreeRecord> trees;
    long truncated_trees = 0;
    double proposals = 0.0, substeps = 0.0;
};

namespace detail {

struct FloorCollector : NullCollector {
    const FloorConfig* cfg;
    PolicyCoeffs pc;
    DustGrid grid;
    std::vector<double> tops; // per band
    int nlines = 0;
    double cascade_q = 0.0;
    bool track_L = false;
    // per-tree working state
    FloorTreeRecord rec;
    std::vector<double> occT, occL; // nlines * NB * 4

    void setup(const FloorConfig& c, const KappaRelations& rel, const DiskRates& rates) {
        cfg = &c;
        pc = PolicyCoeffs(rel.alpha, rates.a_plus, rates.a_minus);
        grid = {c.lines.back(), c.rel_cutoff, c.lines.back()};
        nlines = (int)c.lines.size();
        cascade_q = c.cascade_q > 0.0 ? c.cascade_q : rel.malthus_delta;
        track_L = c.grow_loops;
        tops.resize(DustGrid::NB);
        for (int k = 0; k < DustGrid::NB; ++k) tops[k] = grid.top(k);
        occT.assign((size_t)nlines * DustGrid::NB * 4, 0.0);
        if (track_L) occL.assign((size_t)nlines * DustGrid::NB * 4, 0.0);
    }

    void reset() {
        rec = FloorTreeRecord{};
        rec.sum2_L.assign(nlines, 0.0);
        rec.sum2_T.assign(nlines, 0.0);
        rec.casc_T.assign(nlines, 0.0);
        rec.counts.assign(cfg->count_bands.size(), 0.0);
        rec.nu.assign(cfg->nu_lines.size() * (size_t)cfg->nu_bins, 0.0);
        std::fill(occT.begin(), occT.end(), 0.0);
        std::fill(occL.begin(), occL.end(), 0.0);
    }

    void label(int line, double m, Provenance p, bool skel) {
        if (track_L) rec.sum2_L[line] += m * m;
        if (!skel || p == Provenance::loop_jump) return;
        rec.sum2_T[line] += m * m;
        rec.casc_T[line] += std::pow(m, cascade_q);
        for (size_t nl = 0; nl < cfg->nu_lines.size(); ++nl) {
            if (cfg->nu_lines[nl] != line) continue;
            const double u = m / cfg->lines[line];
            if (u <= cfg->nu_res || u > 1.0) continue;
            int b = (int)std::ceil(u * cfg->nu_bins) - 1;
            if (b < 0) b = 0;
            if (b >= cfg->nu_bins) b = cfg->nu_bins - 1;
            rec.nu[nl * cfg->nu_bins + b] += 1.0;
        }
    }

    void count_up(double l, bool skel) {
        if (!skel) return;
        for (size_t c = 0; c < cfg->count_bands.size(); ++c)
            if (l >= cfg->count_bands[c].first && l <= cfg->count_bands[c].second)
                rec.counts[c] += 1.0;
    }

    void jump(double, double, double l, int sign, bool skel, int) {
        if (sign > 0) count_up(l, skel);
    }
    void sub_birth(double, double, double l, int sign, bool skel, int) {
        if (sign > 0) count_up(l, skel);
    }

    void occupation(int head, bool skel, int band, double h, double y, double) {
        if (band < 0) band = 0;
        if (band >= DustGrid::NB) band = DustGrid::NB - 1;
        const double iy = 1.0 / y;
        const double m1 = h * iy, m2 = m1 * iy, m3 = m2 * iy;
        for (int l = head; l < nlines; ++l) {
            const size_t base = ((size_t)l * DustGrid::NB + band) * 4;
            if (skel) {
                occT[base] += h;
                occT[base + 1] += m1;
                occT[base + 2] += m2;
                occT[base + 3] += m3;
            }
            if (track_L) {
                occL[base] += h;
                occL[base + 1] += m1;
                occL[base + 2] += m2;
                occL[base + 3] += m3;
            }
        }
    }

    void finalize(const GrowStats& st) {
        rec.truncated = st.truncated;
        rec.trunc_frac = st.truncated_mass_fraction;
        for (int l = 0; l < nlines; ++l) {
            for (int k = 0; k < DustGrid::NB; ++k) {
                const size_t base = ((size_t)l * DustGrid::NB + k) * 4;
                const double top = tops[k];
                if (occT[base] > 0.0) {
                    const double* occ = &occT[base];
                    rec.sum2_T[l] += dust_integral(pc, 2.0, 0.0, top, false, true, occ);
                    rec.casc_T[l] += dust_integral(pc, cascade_q, 0.0, top, false, true, occ);
                    for (size_t nl = 0; nl < cfg->nu_lines.size(); ++nl) {
                        if (cfg->nu_lines[nl] != l) continue;
                        const double Y = cfg->lines[l];
                        for (int b = 0; b < cfg->nu_bins; ++b) {
                            const double t1 = std::max(cfg->nu_res, (double)b / cfg->nu_bins) * Y;
                            const double t2 = std::min((b + 1.0) / cfg->nu_bins * Y, top);
                            if (t2 > t1)
                                rec.nu[nl * cfg->nu_bins + b] +=
                                    dust_integral(pc, 0.0, t1, t2, false, true, occ);
                        }
                    }
                }
                if (track_L && occL[base] > 0.0)
                    rec.sum2_L[l] += dust_integral(pc, 2.0, 0.0, top, true, true, &occL[base]);
            }
        }
    }
};

} // namespace detail

inline FloorEnsemble run_floor_ensemble(const FloorConfig& cfg) {
    if (cfg.lines.empty() || cfg.n_trees <= 0)
        throw std::domain_error("run_floor_ensemble: lines and n_trees required");
    FloorEnsemble ens;
    ens.rel = derive_relations(cfg.kappa);
    ens.cfg = cfg;
    ens.cascade_q = cfg.cascade_q > 0.0 ? cfg.cascade_q : ens.rel.malthus_delta;
    ens.trees.resize(cfg.n_trees);
    const DiskRates rates{ens.rel.alpha, ens.rel.u, 1.0, DiskMode::policy};

    GrowConfig gc;
    gc.rates = rates;
    gc.variant = Variant::Ttilde;
    gc.grow_loops = cfg.grow_loops;
    gc.stop.kind = StopRule::Kind::mass_floor;
    gc.stop.floor = cfg.lines.back();
    gc.lines = cfg.lines;
    gc.budget = cfg.budget;
    gc.opt.rel_cutoff = cfg.rel_cutoff;
    gc.opt.gaussian = true;
    gc.opt.eta = cfg.eta;
    gc.opt.grid_floor = cfg.lines.back();
    gc.opt.enum_floor = cfg.lines.back();
    gc.opt.max_ops = cfg.max_ops;

    std::vector<long> trunc(std::max(1, cfg.threads), 0);
    std::vector<double> props(std::max(1, cfg.threads), 0.0), subs(props);
    detail::parallel_blocks(cfg.n_trees, cfg.threads, [&](long b, long e, int w) {
        detail::FloorCollector col;
        col.setup(cfg, ens.rel, rates);
        col.cascade_q = ens.cascade_q;
        for (long i = b; i < e; ++i) {
            col.reset();
            GrowStats st = grow_tree_stream(gc, derive_key(cfg.seed, (std::uint64_t)i, 0xF1u),
                                            col);
            col.finalize(st);
            ens.trees[i] = col.rec;
            if (st.truncated) ++trunc[w];
            props[w] += (double)st.proposals;
            subs[w] += (double)st.substeps;
        }
    });
    for (long v : trunc) ens.truncated_trees += v;
    for (double v : props) ens.proposals += v;
    for (double v : subs) ens.substeps += v;
    return ens;
}

// ---------------------------------------------------------------------------
// Recorded-tree estimators (spec-facing; ensembles use the collectors above).

inline std::vector<bool> skeleton_flags(const FragTree& tree) {
    std::vector<bool> skel(tree.particles.size(), true);
    for (const auto& p : tree.particles) {
        const bool parent_ok = p.parent < 0 ? true : skel[p.parent];
        skel[p.id] = parent_ok && p.origin != Origin::loop_offspring;
    }
    return skel;
}

// M(y) = Sigma label^delta over the mass-floor-y line, for each listed floor,
// completed by the sub-cutoff dust the sampler folded into drift
inline std::vector<CascadeState> intrinsic_area(const FragTree& tree, double delta,
                                                const std::vector<double>& floors) {
    std::vector<CascadeState> out;
    int depth = 0;
    for (double y : floors) {
        const StoppingLineResult line = stopping_line(tree, y); // throws if unresolved
        CascadeState cs;
        cs.depth = depth++;
        cs.exponent = delta;
        cs.line_floor = y;
        for (const auto& lab : line.labels)
            if (lab.skeleton) cs.M += std::pow(lab.mass, delta);
        for (size_t i = 0; i < tree.line_floors.size(); ++i)
            if (std::fabs(tree.line_floors[i] - y) <= 1e-12 * y)
                cs.M += tree.dust_moment(i, delta, false, true, true);
        out.push_back(cs);
    }
    return out;
}

// per-tree rescaled loop counts eps^{alpha+1/2} * N_{[eps,2eps]}
inline std::vector<std::pair<double, double>> loop_count_estimate(
    const FragTree& tree, const std::vector<double>& eps_list) {
    const std::vector<bool> skel = skeleton_flags(tree);
    std::vector<std::pair<double, double>> out;
    for (double eps : eps_list) {
        if (eps < tree.delta_cut)
            throw std::domain_error("loop_count_estimate: eps below the resolved scale");
        long n = 0;
        for (const auto& e : tree.events)
            if (e.sign > 0 && e.size >= eps && e.size <= 2.0 * eps && skel[e.particle]) ++n;
        out.push_back({eps, std::pow(eps, tree.rates.alpha + 0.5) * (double)n});
    }
    return out;
}

// binned empirical stopping-line measure at line y, normalized per tree by
// the terminal cascade value M_inf
struct LineMeasure {
    double y = 0.0;
    std::vector<double> bin_mean; // per bin
    std::vector<double> bin_se;
    long n = 0;
};

inline LineMeasure empirical_line_measure(const FloorEnsemble& ens, double y) {
    if (ens.trees.empty()) throw std::domain_error("empirical_line_measure: empty ensemble");
    int nl = -1;
    for (size_t i = 0; i < ens.cfg.nu_lines.size(); ++i)
        if (std::fabs(ens.cfg.lines[ens.cfg.nu_lines[i]] - y) <= 1e-12 * y) nl = (int)i;
    if (nl < 0) throw std::domain_error("empirical_line_measure: y was not binned");
    const int nb = ens.cfg.nu_bins;
    const double scale = std::pow(y, ens.cascade_q);
    const int fin = (int)ens.cfg.lines.size() - 1;
    LineMeasure lm;
    lm.y = y;
    lm.bin_mean.assign(nb, 0.0);
    lm.bin_se.assign(nb, 0.0);
    std::vector<double> vals(ens.trees.size());
    for (int b = 0; b < nb; ++b) {
        for (size_t i = 0; i < ens.trees.size(); ++i) {
            const double minf = ens.trees[i].casc_T[fin];
            vals[i] = minf > 1e-12 ? scale * ens.trees[i].nu[nl * nb + b] / minf : 0.0;
        }
        const MeanSe ms = mean_se(vals);
        lm.bin_mean[b] = ms.mean;
        lm.bin_se[b] = ms.se;
        lm.n = ms.n;
    }
    return lm;
}

} // namespace fragx
