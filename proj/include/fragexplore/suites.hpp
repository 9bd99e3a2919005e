#pragma once

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fragexplore/carpet.hpp"
#include "fragexplore/report.hpp"

// Acceptance battery shared by the CLI `check` command and the acceptance
// runner. Each suite writes its artifacts through an ArtifactSink, returns a
// SuiteResult with one item per checked property, and is fully determined by
// (seed, scale): identical inputs give byte-identical artifacts.

namespace fragx {

struct SuiteScale {
    bool quick = false;
    long stable_paths = 10'000;  // jump-band and terminal-mean paths
    long ks_paths = 200'000;     // scaling KS sample size per arm
    long rate_paths = 100'000;   // jump-intensity grid paths
    long is_paths = 100'000;     // importance-sampling paths per arm
    long exit_trees = 10'000;    // exit-(1/2,2) ensembles
    long floor_trees = 10'000;   // mass-floor ensembles for the area martingale
    long measure_trees = 10'000; // carpet-measure ensemble
    long tail_trees = 30'000;    // tail/count-bound ensemble
    int threads = 1;
    std::uint64_t seed = 42;
};

inline SuiteScale full_scale(std::uint64_t seed, int threads) {
    SuiteScale s;
    s.seed = seed;
    s.threads = threads;
    return s;
}

inline SuiteScale quick_scale(std::uint64_t seed, int threads) {
    SuiteScale s{true, 2'000, 20'000, 4'000, 10'000, 600, 500, 500, 2'000, threads, seed};
    return s;
}

// Collects everything a suite writes so a failed run can be cleaned up and a
// successful one digested into the manifest.
class ArtifactSink {
  public:
    explicit ArtifactSink(std::string out_dir) : dir_(std::move(out_dir)) {
        std::filesystem::create_directories(dir_);
    }
    void write(const std::string& rel_path, const std::string& content) {
        const std::string full = dir_ + "/" + rel_path;
        std::ofstream out(full, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + full);
        out << content;
        out.close();
        files_.push_back(digest_file(full, rel_path));
    }
    void remove_all() {
        for (const auto& f : files_) std::filesystem::remove(dir_ + "/" + f.path);
        files_.clear();
    }
    std::vector<FileDigest> take_files() { return std::move(files_); }
    const std::string& dir() const { return dir_; }

  private:
    std::string dir_;
    std::vector<FileDigest> files_;
};

namespace detail {

inline std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline ReportItem item(std::string name, double measured, double target, double tol,
                       bool pass, std::string note = "") {
    return {std::move(name), pass, measured, target, tol, std::move(note)};
}

// |measured - target| <= tol
inline ReportItem near(std::string name, double measured, double target, double tol,
                       std::string note = "") {
    const bool ok = std::fabs(measured - target) <= tol;
    return {std::move(name), ok, measured, target, tol, std::move(note)};
}

inline void finish(SuiteResult& r, ArtifactSink& sink) {
    r.files = sink.take_files();
    for (const auto& it : r.items)
        if (!it.pass) r.pass = false;
}

} // namespace detail

// ---------------------------------------------------------------------------
// relations-sweep: exponent identities, endpoint values, monotonicity.

inline SuiteResult suite_relations(ArtifactSink& sink, const SuiteScale&) {
    SuiteResult res;
    res.name = "relations-sweep";

    const int nb = 201;
    auto beta_at = [&](int i) { return -1.0 + 2.0 * i / (nb - 1); };

    double worst_mean = 0.0, worst_ratio = 0.0;
    double worst_end1 = 0.0, worst_endm1 = 0.0, worst_mid = 0.0;
    double min_incr = std::numeric_limits<double>::infinity();
    for (double kappa : {2.7, 3.0, 3.5, 3.99}) {
        const KappaRelations rel = derive_relations(kappa);
        double prev_rho = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < nb; ++i) {
            const double beta = beta_at(i);
            const double rho = rho_prime_from_beta(beta, rel);
            const LadderQuantities q = ladder_quantities(rho, rel);
            worst_mean = std::max(worst_mean,
                                  std::fabs(0.5 * (q.u_L + q.u_R) +
                                            std::cos(std::numbers::pi * rel.alpha)));
            if (i > 0 && i < nb - 1)
                worst_ratio = std::max(worst_ratio,
                                       std::fabs(q.u_L / q.u_R - (1.0 - beta) / (1.0 + beta)));
            min_incr = std::min(min_incr, rho - prev_rho);
            prev_rho = rho;
        }
        worst_end1 = std::max(worst_end1, std::fabs(rho_prime_from_beta(1.0, rel)));
        worst_endm1 = std::max(
            worst_endm1, std::fabs(rho_prime_from_beta(-1.0, rel) - (rel.kappa_prime - 6.0)));
        worst_mid = std::max(worst_mid, std::fabs(rho_prime_from_beta(0.0, rel) -
                                                  0.5 * (rel.kappa_prime - 6.0)));
    }

    // the kappa = 3 sweep is the artifact: -cos(pi*alpha) = 1/2 there
    const KappaRelations r3 = derive_relations(3.0);
    std::string csv = "beta,rho_prime,P_L,P_R,u_L,u_R,mean_ratio\n";
    double worst_half = 0.0;
    for (int i = 0; i < nb; ++i) {
        const double beta = beta_at(i);
        const double rho = rho_prime_from_beta(beta, r3);
        const LadderQuantities q = ladder_quantities(rho, r3);
        const double mr = 0.5 * (q.u_L + q.u_R);
        worst_half = std::max(worst_half, std::fabs(mr - 0.5));
        using detail::fmt_g;
        csv += fmt_g(beta) + "," + fmt_g(rho) + "," + fmt_g(q.P_L) + "," + fmt_g(q.P_R) + "," +
               fmt_g(q.u_L) + "," + fmt_g(q.u_R) + "," + fmt_g(mr) + "\n";
    }
    sink.write("relations_sweep.csv", csv);

    res.items.push_back(detail::near("ladder-mean-identity", worst_mean, 0.0, 1e-9,
                                     "max |(u_L+u_R)/2 + cos(pi a)| over 4 kappa x 201 beta"));
    res.items.push_back(detail::near("ladder-ratio-identity", worst_ratio, 0.0, 1e-9,
                                     "max |u_L/u_R - (1-b)/(1+b)|, interior beta"));
    res.items.push_back(detail::near("rho-at-beta-1", worst_end1, 0.0, 1e-10));
    res.items.push_back(detail::near("rho-at-beta-minus-1", worst_endm1, 0.0, 1e-10,
                                     "target kappa'-6"));
    res.items.push_back(detail::near("rho-at-beta-0", worst_mid, 0.0, 1e-10,
                                     "target (kappa'-6)/2"));
    res.items.push_back(detail::item("rho-strictly-increasing", min_incr, 0.0, 0.0,
                                     min_incr > 0.0, "min forward difference on the grid"));
    res.items.push_back(detail::near("sweep-mean-ratio-half", worst_half, 0.0, 1e-9,
                                     "kappa = 3 artifact column"));
    detail::finish(res, sink);
    return res;
}

// ---------------------------------------------------------------------------
// stable-checks: PPP band counts, terminal scaling KS, compensated mean.

inline SuiteResult suite_stable(ArtifactSink& sink, const SuiteScale& sc) {
    SuiteResult res;
    res.name = "stable-checks";
    const double alpha = 4.0 / 3.0;
    const std::uint64_t seed = derive_key(sc.seed, 0x57ab1eULL);
    nlohmann::json art;

    { // jump counts per size band against the PPP means
        const StableJumpLaw law{alpha, 0.5, 1.0};
        const double T = 1.0, cut = 0.01;
        const double edges[5] = {0.01, 0.02, 0.05, 0.2,
                                 std::numeric_limits<double>::infinity()};
        long counts[8] = {0};
        Rng rng(derive_key(seed, 1));
        for (long i = 0; i < sc.stable_paths; ++i) {
            const SkeletonPath p = sample_path(law, T, cut, 0.0, rng);
            for (const auto& j : p.jumps)
                for (int b = 0; b < 4; ++b)
                    if (j.size >= edges[b] && j.size < edges[b + 1])
                        counts[(j.sign > 0 ? 0 : 4) + b]++;
        }
        double worst = 0.0;
        nlohmann::json bands = nlohmann::json::array();
        for (int s = 0; s < 2; ++s)
            for (int b = 0; b < 4; ++b) {
                const double m = sc.stable_paths *
                                 ppp_band_mass(s == 0 ? law.a_plus : law.a_minus, alpha,
                                               edges[b], edges[b + 1], T);
                const double z = (counts[s * 4 + b] - m) / std::sqrt(m);
                worst = std::max(worst, std::fabs(z));
                bands.push_back({{"sign", s == 0 ? 1 : -1},
                                 {"lo", edges[b]},
                                 {"count", counts[s * 4 + b]},
                                 {"mean", m},
                                 {"z", z}});
            }
        art["band_counts"] = bands;
        res.items.push_back(detail::item("ppp-band-counts", worst, 0.0, 4.0, worst <= 4.0,
                                         "max |z| over 8 sign x size bands"));
    }

    { // self-similarity: X_1 vs 2^{-1/a} X_2 with the cutoff matched exactly
        const StableJumpLaw law{alpha, 1.0, 1.0};
        const double cut = 0.01, scale = std::pow(2.0, -1.0 / alpha);
        std::vector<double> x1(sc.ks_paths), x2(sc.ks_paths);
        Rng rng(derive_key(seed, 2));
        for (long i = 0; i < sc.ks_paths; ++i)
            x1[i] = sample_path(law, 1.0, cut, 0.0, rng).terminal();
        for (long i = 0; i < sc.ks_paths; ++i)
            x2[i] = scale * sample_path(law, 2.0, cut / scale, 0.0, rng).terminal();
        const double d = ks_two_sample(x1, x2);
        const double stat = d * std::sqrt((double)sc.ks_paths / 2.0);
        art["ks"] = {{"distance", d}, {"n", sc.ks_paths}, {"stat", stat}};
        res.items.push_back(detail::item("terminal-scaling-ks", stat, 0.0, 1.628,
                                         ks_pass(d, sc.ks_paths, sc.ks_paths),
                                         "level 0.01 two-sample KS"));
    }

    { // compensated asymmetric law: terminal mean is 0
        const StableJumpLaw law{alpha, 0.3, 1.0};
        std::vector<double> term(sc.stable_paths);
        Rng rng(derive_key(seed, 3));
        for (long i = 0; i < sc.stable_paths; ++i)
            term[i] = sample_path(law, 1.0, 0.01, 0.0, rng).terminal();
        const MeanSe ms = mean_se(term);
        art["terminal"] = {{"mean", ms.mean}, {"se", ms.se}, {"n", ms.n}};
        res.items.push_back(detail::item("compensated-terminal-mean", std::fabs(ms.mean) / ms.se,
                                         0.0, 4.0, std::fabs(ms.mean) <= 4.0 * ms.se,
                                         "|mean|/se"));
    }

    sink.write("stable_checks.json", art.dump(2) + "\n");
    detail::finish(res, sink);
    return res;
}

// ---------------------------------------------------------------------------
// disk-checks: jump-intensity grid and the importance-sampling cross-check.

namespace detail {

// integrated size-band intensity, tabulated on a log-y grid
struct BandTable {
    double l1, l2, ylo, lstep;
    std::vector<double> table;
    BandTable() = default;
    BandTable(const DiskRates& r, double l1_, double l2_, double ylo_, double yhi, int n = 2000)
        : l1(l1_), l2(l2_), ylo(ylo_) {
        lstep = std::log(yhi / ylo) / n;
        table.resize(n + 1);
        for (int i = 0; i <= n; ++i) {
            const double y = ylo * std::exp(i * lstep);
            const double hi_dn = std::min(l2, 0.5 * y);
            double v = integrate([&](double l) { return disk_jump_rate(r, y, l, +1); }, l1, l2,
                                 1e-9);
            if (hi_dn > l1)
                v += integrate([&](double l) { return disk_jump_rate(r, y, l, -1); }, l1, hi_dn,
                               1e-9);
            table[i] = v;
        }
    }
    double operator()(double y) const {
        double u = std::log(y / ylo) / lstep;
        if (u < 0.0) u = 0.0;
        if (u > table.size() - 1.001) u = table.size() - 1.001;
        const int i = (int)u;
        const double f = u - i;
        return table[i] * (1.0 - f) + table[i + 1] * f;
    }
};

struct GridProbe {
    static constexpr int NS = 8, NZ = 8;
    const BandTable* bands; // NZ tables
    double s_lo, s_hi, z_lo, z_hi;
    double cnt[NS * NZ], ei[NS * NZ];
    void reset() {
        std::fill(cnt, cnt + NS * NZ, 0.0);
        std::fill(ei, ei + NS * NZ, 0.0);
    }
    int srow(double y) const {
        if (y < s_lo || y >= s_hi) return -1;
        return (int)(NS * std::log(y / s_lo) / std::log(s_hi / s_lo));
    }
    void substep(double, double y, double h, double, int) {
        const int i = srow(y);
        if (i < 0) return;
        for (int j = 0; j < NZ; ++j) ei[i * NZ + j] += h * bands[j](y);
    }
    bool moved(double, double) { return false; }
    void sub_birth(double, double, double, int) {}
    StepControl jump(double, double y, double l, int s) {
        const int i = srow(y);
        if (i >= 0 && l >= z_lo && l < z_hi) {
            const int j = (int)(NZ * std::log(l / z_lo) / std::log(z_hi / z_lo));
            cnt[i * NZ + j] += 1.0;
        }
        return {s > 0 ? y + l : y - l, false};
    }
};

} // namespace detail

inline SuiteResult suite_disk(ArtifactSink& sink, const SuiteScale& sc) {
    SuiteResult res;
    res.name = "disk-checks";
    const KappaRelations rel = derive_relations(3.0);
    const DiskRates rates{rel.alpha, rel.u, 1.0, DiskMode::policy};
    const std::uint64_t seed = derive_key(sc.seed, 0xd15cULL);
    nlohmann::json art;

    { // (a) per-cell martingale: jump counts minus integrated intensity
        constexpr int NS = detail::GridProbe::NS, NZ = detail::GridProbe::NZ;
        const double s_lo = 0.4, s_hi = 2.0, z_lo = 0.0125, z_hi = 0.2;
        std::vector<detail::BandTable> bands(NZ);
        for (int j = 0; j < NZ; ++j) {
            const double l1 = z_lo * std::pow(z_hi / z_lo, j / (double)NZ);
            const double l2 = z_lo * std::pow(z_hi / z_lo, (j + 1) / (double)NZ);
            bands[j] = detail::BandTable(rates, l1, l2, s_lo, s_hi);
        }
        detail::GridProbe probe;
        probe.bands = bands.data();
        probe.s_lo = s_lo;
        probe.s_hi = s_hi;
        probe.z_lo = z_lo;
        probe.z_hi = z_hi;
        SamplerOptions opt;
        opt.abs_cutoff = 0.01;
        opt.eta = 0.001; // small steps: the bin-occupancy Riemann sum must be unbiased
        double sum_d[NS * NZ] = {0.0}, sumsq_d[NS * NZ] = {0.0};
        Rng rng(derive_key(seed, 1));
        for (long p = 0; p < sc.rate_paths; ++p) {
            probe.reset();
            simulate_policy(rates, 1.0, 0.5, 0.4, 1e9, opt, rng, probe);
            for (int c = 0; c < NS * NZ; ++c) {
                const double d = probe.cnt[c] - probe.ei[c];
                sum_d[c] += d;
                sumsq_d[c] += d * d;
            }
        }
        double worst = 0.0;
        for (int c = 0; c < NS * NZ; ++c) {
            const double n = (double)sc.rate_paths;
            const double var = (sumsq_d[c] - sum_d[c] * sum_d[c] / n) / (n - 1.0);
            if (var <= 0.0) continue;
            const double z = (sum_d[c] / n) / std::sqrt(var / n);
            worst = std::max(worst, std::fabs(z));
        }
        art["rate_grid"] = {{"paths", sc.rate_paths}, {"max_abs_z", worst}};
        res.items.push_back(detail::item("intensity-grid", worst, 0.0, 3.0, worst <= 3.0,
                                         "max |z| of count - integrated rate, 8x8 cells"));
    }

    { // (b) direct policy law vs reweighted stable law on three functionals
        const double a = rel.alpha, T = 0.3, r_floor = 0.4, delta = 0.01;
        const StableJumpLaw rx{a, rel.u, 1.0};
        auto fs = [](double yT) {
            return std::array<double, 3>{yT > 0.8 && yT < 1.5 ? 1.0 : 0.0, std::min(yT, 3.0),
                                         1.0 / (1.0 + yT)};
        };
        std::array<std::vector<double>, 3> direct, weighted;
        for (auto& v : direct) v.reserve(sc.is_paths);
        for (auto& v : weighted) v.reserve(sc.is_paths);
        SamplerOptions opt;
        opt.abs_cutoff = delta;
        NullObserver obs;
        Rng rng1(derive_key(seed, 2));
        for (long i = 0; i < sc.is_paths; ++i) {
            const SimResult s = simulate_policy(rates, 1.0, T, r_floor, 1e9, opt, rng1, obs);
            const bool alive = s.reason == StopReason::horizon;
            const auto f = fs(s.y);
            for (int k = 0; k < 3; ++k) direct[k].push_back(alive ? f[k] : 0.0);
        }
        Rng rng2(derive_key(seed, 3));
        for (long i = 0; i < sc.is_paths; ++i) {
            const SkeletonPath p = sample_path(rx, T, delta, 1.0, rng2);
            double v = 1.0, minv = 1.0, tprev = 0.0;
            bool ok = true;
            for (const auto& j : p.jumps) {
                v += p.drift_rate * (j.time - tprev);
                tprev = j.time;
                if (p.drift_rate < 0.0) minv = std::min(minv, v);
                if (j.sign < 0 && j.size >= v / 2.0) { ok = false; break; }
                v += j.sign * j.size;
                minv = std::min(minv, v);
            }
            if (ok) {
                v += p.drift_rate * (T - tprev);
                if (p.drift_rate < 0.0) minv = std::min(minv, v);
            }
            if (!ok || minv <= r_floor || v <= 0.0) {
                for (int k = 0; k < 3; ++k) weighted[k].push_back(0.0);
                continue;
            }
            const double w = std::pow(1.0 / v, a + 1.0);
            const auto f = fs(v);
            for (int k = 0; k < 3; ++k) weighted[k].push_back(w * f[k]);
        }
        double worst = 0.0;
        nlohmann::json fns = nlohmann::json::array();
        for (int k = 0; k < 3; ++k) {
            const MeanSe d = mean_se(direct[k]), w = mean_se(weighted[k]);
            const double pooled = std::sqrt(d.se * d.se + w.se * w.se);
            const double z = std::fabs(d.mean - w.mean) / pooled;
            worst = std::max(worst, z);
            fns.push_back({{"direct", d.mean},
                           {"direct_se", d.se},
                           {"weighted", w.mean},
                           {"weighted_se", w.se},
                           {"z", z}});
        }
        art["importance_sampling"] = fns;
        res.items.push_back(detail::item("importance-sampling", worst, 0.0, 3.0, worst <= 3.0,
                                         "max |z| over 3 functionals, pooled se"));
    }

    sink.write("disk_checks.json", art.dump(2) + "\n");
    detail::finish(res, sink);
    return res;
}

// ---------------------------------------------------------------------------
// tree-martingales: the area martingale at the exit line and mass-floor lines.

inline SuiteResult suite_tree_martingales(ArtifactSink& sink, const SuiteScale& sc) {
    SuiteResult res;
    res.name = "tree-martingales";
    const std::uint64_t seed = derive_key(sc.seed, 0x7e3eULL);
    const double se_cap = sc.quick ? 0.12 : 0.02;
    nlohmann::json art;

    int k = 0;
    for (double kappa : {3.0, 3.5}) {
        const std::string tag = kappa == 3.0 ? "k3" : "k35";
        const ExitEnsemble ens = sample_exit_ensemble(kappa, sc.exit_trees,
                                                      derive_key(seed, 1, k), Variant::Ttilde,
                                                      0.005, sc.threads);
        const EstimatorReport m2 = moment_sum(ens, 2.0, LabelSet::Ttilde_labels);
        const EstimatorReport m2t = moment_sum(ens, 2.0, LabelSet::T_labels);
        art["exit_" + tag] = {{"m2_full", m2.estimate},
                              {"m2_full_se", m2.std_error},
                              {"m2_T", m2t.estimate},
                              {"m2_T_se", m2t.std_error},
                              {"n", m2.n}};
        res.items.push_back(detail::near("exit-area-martingale-" + tag, m2.estimate, 1.0,
                                         3.0 * m2.std_error, "full label set, 3 se"));
        res.items.push_back(detail::item("exit-area-se-bound-" + tag, m2.std_error, 0.0, se_cap,
                                         m2.std_error <= se_cap));
        const double zt = (1.0 - m2t.estimate) / m2t.std_error;
        res.items.push_back(detail::item("exit-strict-loss-" + tag, zt, 3.0, 0.0, zt > 3.0,
                                         "(1 - split-only sum)/se must exceed 3"));

        FloorConfig fc;
        fc.kappa = kappa;
        fc.lines = {0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625};
        fc.n_trees = sc.floor_trees;
        fc.seed = derive_key(seed, 2, k);
        fc.threads = sc.threads;
        const FloorEnsemble fe = run_floor_ensemble(fc);
        for (int li : {3, 5}) { // floors 2^-4 and 2^-6
            std::vector<double> v(fe.trees.size());
            for (size_t i = 0; i < fe.trees.size(); ++i) v[i] = fe.trees[i].sum2_L[li];
            const MeanSe ms = mean_se(v);
            const std::string nm = li == 3 ? "floor-2m4-" + tag : "floor-2m6-" + tag;
            art[nm] = {{"mean", ms.mean}, {"se", ms.se}, {"n", ms.n}};
            res.items.push_back(detail::near("area-martingale-" + nm, ms.mean, 1.0, 3.0 * ms.se,
                                             "full label set at the mass-floor line"));
            res.items.push_back(detail::item("area-se-bound-" + nm, ms.se, 0.0, se_cap,
                                             ms.se <= se_cap));
        }
        ++k;
    }

    sink.write("tree_martingales.json", art.dump(2) + "\n");
    detail::finish(res, sink);
    return res;
}

// ---------------------------------------------------------------------------
// malthus: the analytic cumulant root and the Monte Carlo root.

inline SuiteResult suite_malthus(ArtifactSink& sink, const SuiteScale& sc) {
    SuiteResult res;
    res.name = "malthus";
    const std::uint64_t seed = derive_key(sc.seed, 0x3a17ULL);
    nlohmann::json art;

    double worst_res = 0.0, worst_root = 0.0;
    for (double kappa : {2.8, 3.0, 3.5, 3.9}) {
        const KappaRelations rel = derive_relations(kappa);
        const double delta = rel.malthus_delta;
        worst_res = std::max(worst_res, std::fabs(cumulant_residual(delta, rel)));
        const double root = cumulant_root(rel, rel.alpha + 0.15, rel.alpha + 0.95);
        worst_root = std::max(worst_root, std::fabs(root - delta));
    }
    art["analytic"] = {{"max_abs_residual", worst_res}, {"max_root_error", worst_root}};
    res.items.push_back(detail::near("cumulant-residual-at-delta", worst_res, 0.0, 1e-3,
                                     "max over kappa in {2.8,3,3.5,3.9}"));
    res.items.push_back(detail::near("cumulant-root", worst_root, 0.0, 5e-3,
                                     "bisection root vs alpha + 1/2"));

    int k = 0;
    for (double kappa : {3.0, 3.5}) {
        const std::string tag = kappa == 3.0 ? "k3" : "k35";
        const ExitEnsemble ens = sample_exit_ensemble(kappa, sc.exit_trees,
                                                      derive_key(seed, 4, k), Variant::Ttilde,
                                                      0.005, sc.threads);
        const MalthusReport rep = malthus_root_mc(ens);
        const double tol = sc.quick ? std::max(0.03, 4.0 * rep.mc_root_se) : 0.03;
        nlohmann::json grid = nlohmann::json::array();
        for (const auto& g : rep.grid)
            grid.push_back({{"q", g.q}, {"estimate", g.estimate}, {"se", g.se}});
        art["mc_" + tag] = {{"analytic_delta", rep.analytic_delta},
                            {"mc_root", rep.mc_root},
                            {"mc_root_se", rep.mc_root_se},
                            {"se_valid", rep.se_valid},
                            {"cumulant_residual_at_delta", rep.cumulant_residual_at_delta},
                            {"grid", grid}};
        res.items.push_back(detail::near("mc-root-" + tag, rep.mc_root, rep.analytic_delta, tol,
                                         "common random numbers across the q grid"));
        ++k;
    }

    sink.write("malthus.json", art.dump(2) + "\n");
    detail::finish(res, sink);
    return res;
}

// ---------------------------------------------------------------------------
// measure: carpet-measure estimator, stopping-line measure, tail bounds.

inline SuiteResult suite_measure(ArtifactSink& sink, const SuiteScale& sc) {
    SuiteResult res;
    res.name = "measure";
    const std::uint64_t seed = derive_key(sc.seed, 0x3ea5ULL);
    nlohmann::json art;

    FloorConfig fc;
    fc.kappa = 3.0;
    fc.lines = {0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625};
    fc.n_trees = sc.measure_trees;
    fc.seed = derive_key(seed, 1);
    fc.threads = sc.threads;
    const double epses[3] = {0.015625, 0.0078125, 0.00390625}; // 2^-6, 2^-7, 2^-8
    for (double e : epses) fc.count_bands.push_back({e, 2.0 * e});
    fc.nu_lines = {5, 7}; // lines 2^-6 and 2^-8
    const FloorEnsemble ens = run_floor_ensemble(fc);
    const double delta = ens.cascade_q;
    const int fin = (int)fc.lines.size() - 1;

    std::string csv = "tree_id,M_inf_hat,eps,rescaled_count\n";
    std::array<std::vector<double>, 3> rescaled;
    std::vector<double> minf(ens.trees.size());
    for (size_t i = 0; i < ens.trees.size(); ++i) {
        minf[i] = ens.trees[i].casc_T[fin];
        for (int j = 0; j < 3; ++j) {
            const double rc = std::pow(epses[j], delta) * ens.trees[i].counts[j];
            rescaled[j].push_back(rc);
            using detail::fmt_g;
            csv += std::to_string(i) + "," + fmt_g(minf[i]) + "," + fmt_g(epses[j]) + "," +
                   fmt_g(rc) + "\n";
        }
    }
    sink.write("measure_per_tree.csv", csv);

    const double corr8 = pearson_corr(rescaled[2], minf);
    res.items.push_back(detail::item("count-mass-correlation", corr8, 0.9, 0.0, corr8 >= 0.9,
                                     "corr(eps^d N, M_inf) at eps = 2^-8"));
    double cv[3];
    for (int j = 0; j < 3; ++j) {
        std::vector<double> ratio;
        ratio.reserve(minf.size());
        for (size_t i = 0; i < minf.size(); ++i)
            if (minf[i] > 1e-12) ratio.push_back(rescaled[j][i] / minf[i]);
        const MeanSe ms = mean_se(ratio);
        double var = 0.0;
        for (double r : ratio) var += (r - ms.mean) * (r - ms.mean);
        var /= (ratio.size() - 1.0);
        cv[j] = std::sqrt(var) / ms.mean;
    }
    const double min_drop = std::min(cv[0] - cv[1], cv[1] - cv[2]);
    art["carpet_measure"] = {{"corr_2m8", corr8}, {"cv", {cv[0], cv[1], cv[2]}}};
    res.items.push_back(detail::item("ratio-cv-decreasing", min_drop, 0.0, 0.0, min_drop > 0.0,
                                     "CV strictly decreasing over eps 2^-6,2^-7,2^-8"));

    { // stopping-line measure self-consistency across two lines
        const LineMeasure lm6 = empirical_line_measure(ens, 0.015625);
        const LineMeasure lm8 = empirical_line_measure(ens, 0.00390625);
        double worst = 0.0;
        nlohmann::json bins = nlohmann::json::array();
        for (int b = 0; b < (int)lm6.bin_mean.size(); ++b) {
            const double pooled = std::sqrt(lm6.bin_se[b] * lm6.bin_se[b] +
                                            lm8.bin_se[b] * lm8.bin_se[b]);
            const double z = pooled > 0.0 ? std::fabs(lm6.bin_mean[b] - lm8.bin_mean[b]) / pooled
                                          : 0.0;
            worst = std::max(worst, z);
            bins.push_back({{"m6", lm6.bin_mean[b]}, {"m8", lm8.bin_mean[b]}, {"z", z}});
        }
        art["line_measure"] = bins;
        res.items.push_back(detail::item("line-measure-bins", worst, 0.0, 3.0, worst <= 3.0,
                                         "max bin-wise |z|, 10 bins, pooled se"));
    }

    { // tail and count bounds on a dedicated exit ensemble
        const KappaRelations rel = derive_relations(3.0);
        const ExitEnsemble te = sample_exit_ensemble(3.0, sc.tail_trees, derive_key(seed, 2),
                                                     Variant::Ttilde, 0.005, sc.threads);
        double worst_excess = -std::numeric_limits<double>::infinity();
        nlohmann::json counts = nlohmann::json::array();
        for (double x : {1.0, 2.0, 4.0}) {
            double s = 0.0;
            for (const auto& t : te.trees) {
                long c = 0;
                for (double l : t.labels_T) c += l >= x;
                for (double l : t.labels_loop) c += l >= x;
                s += (double)c;
            }
            const double mean = s / te.trees.size();
            worst_excess = std::max(worst_excess, mean - 1.0 / (x * x));
            counts.push_back({{"x", x}, {"mean_count", mean}, {"bound", 1.0 / (x * x)}});
        }
        res.items.push_back(detail::item("count-bound", worst_excess, 0.0, 0.0,
                                         worst_excess <= 0.0,
                                         "max of mean N_[x,inf) - 1/x^2 over x in {1,2,4}"));

        std::vector<double> l0s(te.trees.size());
        for (size_t i = 0; i < te.trees.size(); ++i) l0s[i] = te.trees[i].l0;
        const double tail_idx = 2.0 * rel.alpha + 1.0;
        const HillFit fit = hill_estimator(l0s, 2.0);
        res.items.push_back(detail::near("largest-label-hill", fit.index, tail_idx, 0.15,
                                         "threshold 2, k = " + std::to_string(fit.k)));
        double cmin = std::numeric_limits<double>::infinity(), cmax = 0.0;
        nlohmann::json brk = nlohmann::json::array();
        for (int g = 0; g < 7; ++g) {
            const double x = 2.0 * std::pow(6.0, g / 6.0); // log grid on [2, 12]
            long c = 0;
            for (double v : l0s) c += v >= x;
            const double r = (c / (double)l0s.size()) * std::pow(x, tail_idx);
            cmin = std::min(cmin, r);
            cmax = std::max(cmax, r);
            brk.push_back({{"x", x}, {"survival_times_x_pow", r}});
        }
        const double spread = cmin > 0.0 ? cmax / cmin : std::numeric_limits<double>::infinity();
        res.items.push_back(detail::item("largest-label-bracket", spread, 1.0, 6.0,
                                         cmin > 0.0 && spread <= 6.0,
                                         "C/c over x in [2,12] for survival * x^(2a+1)"));
        art["tail"] = {{"counts", counts},
                       {"hill_index", fit.index},
                       {"hill_se", fit.se},
                       {"hill_k", fit.k},
                       {"bracket", brk},
                       {"trees", sc.tail_trees}};
    }

    sink.write("measure_summary.json", art.dump(2) + "\n");
    detail::finish(res, sink);
    return res;
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& all_suite_names() {
    static const std::vector<std::string> names = {"relations-sweep", "stable-checks",
                                                   "disk-checks",     "tree-martingales",
                                                   "malthus",         "measure"};
    return names;
}

inline SuiteResult run_one_suite(const std::string& name, ArtifactSink& sink,
                                 const SuiteScale& sc) {
    if (name == "relations-sweep") return suite_relations(sink, sc);
    if (name == "stable-checks") return suite_stable(sink, sc);
    if (name == "disk-checks") return suite_disk(sink, sc);
    if (name == "tree-martingales") return suite_tree_martingales(sink, sc);
    if (name == "malthus") return suite_malthus(sink, sc);
    if (name == "measure") return suite_measure(sink, sc);
    throw std::domain_error("unknown suite: " + name);
}

// Runs the named suites; a suite that throws has its partial outputs removed
// and is reported as failed with the error message.
inline RunManifest run_suites(const std::vector<std::string>& names, const std::string& out_dir,
                              const SuiteScale& sc, const std::string& version) {
    RunManifest m;
    m.tool_version = version;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& name : names) {
        ArtifactSink sink(out_dir);
        try {
            m.suites.push_back(run_one_suite(name, sink, sc));
        } catch (const std::exception& e) {
            sink.remove_all();
            SuiteResult r;
            r.name = name;
            r.pass = false;
            r.items.push_back({"execution", false, 0.0, 0.0, 0.0, e.what()});
            m.suites.push_back(std::move(r));
        }
    }
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return m;
}

} // namespace fragx
