// fragx: growth-fragmentation exploration toolkit command line.
//
// Subcommands: relations, sample-stable, sample-disk, grow-tree, malthus,
// measure, check. Global flags: --seed, --threads, --out-dir, --config FILE.
// FRAG_EXPLORE_SEED overrides --seed when set. Exit codes: 0 pass,
// 1 acceptance failure, 2 configuration error, 3 internal error.

#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fragexplore/suites.hpp"

using nlohmann::json;
using namespace fragx;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string side_name(JumpSide s) {
    switch (s) {
        case JumpSide::left: return "left";
        case JumpSide::right: return "right";
        default: return "none";
    }
}

std::string kind_name(JumpKind k) {
    switch (k) {
        case JumpKind::loop: return "loop";
        case JumpKind::split: return "split";
        default: return "plain";
    }
}

std::string reason_name(StopReason r) {
    switch (r) {
        case StopReason::horizon: return "horizon";
        case StopReason::floor: return "floor";
        case StopReason::ceiling: return "ceiling";
        case StopReason::requested: return "requested";
        default: return "ops_budget";
    }
}

std::string origin_name(Origin o) {
    switch (o) {
        case Origin::root: return "root";
        case Origin::split_offspring: return "split_offspring";
        default: return "loop_offspring";
    }
}

std::string status_name(ParticleStatus s) {
    switch (s) {
        case ParticleStatus::active: return "active";
        case ParticleStatus::stopped_at_line: return "stopped_at_line";
        default: return "truncated_by_budget";
    }
}

std::string prov_name(Provenance p) {
    switch (p) {
        case Provenance::discarded_split_piece: return "discarded_split_piece";
        case Provenance::loop_jump: return "loop_jump";
        default: return "terminal_label";
    }
}

std::string fmt_g(double v) { return detail::fmt_g(v); }

void write_file(const std::string& path, const std::string& content) {
    const auto dir = std::filesystem::path(path).parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::domain_error("cannot write output file: " + path);
    out << content;
}

// "2^-6" or a plain decimal
double parse_eps(const std::string& tok) {
    if (tok.rfind("2^", 0) == 0) return std::pow(2.0, std::stod(tok.substr(2)));
    return std::stod(tok);
}

BranchPolicy parse_policy(const std::string& s) {
    BranchPolicy p;
    if (s == "largest") {
        p.kind = BranchPolicy::Kind::follow_largest;
    } else if (s.rfind("q=", 0) == 0) {
        p.kind = BranchPolicy::Kind::q_weighted;
        p.q = std::stod(s.substr(2));
    } else {
        throw std::domain_error("policy must be 'largest' or 'q=VALUE'");
    }
    return p;
}

struct Globals {
    std::uint64_t seed = 1;
    int threads = (int)std::max(1u, std::thread::hardware_concurrency());
    std::string out_dir = ".";
};

// ---------------------------------------------------------------------------

int cmd_relations(const Globals&, double kappa, double beta, bool has_beta, bool table,
                  const std::string& out) {
    const KappaRelations rel = derive_relations(kappa);
    if (table) {
        std::string csv = "beta,rho_prime,P_L,P_R,u_L,u_R,mean_ratio\n";
        for (int i = 0; i < 201; ++i) {
            const double b = -1.0 + 2.0 * i / 200.0;
            const double rho = rho_prime_from_beta(b, rel);
            const LadderQuantities q = ladder_quantities(rho, rel);
            csv += fmt_g(b) + "," + fmt_g(rho) + "," + fmt_g(q.P_L) + "," + fmt_g(q.P_R) + "," +
                   fmt_g(q.u_L) + "," + fmt_g(q.u_R) + "," + fmt_g(0.5 * (q.u_L + q.u_R)) + "\n";
        }
        if (out.empty())
            std::cout << csv;
        else
            write_file(out, csv);
        return 0;
    }
    json j;
    j["kappa"] = rel.kappa;
    j["gamma"] = rel.gamma;
    j["kappa_prime"] = rel.kappa_prime;
    j["alpha"] = rel.alpha;
    j["u"] = rel.u;
    j["malthus_delta"] = rel.malthus_delta;
    if (has_beta) {
        const double rho = rho_prime_from_beta(beta, rel);
        const LadderQuantities q = ladder_quantities(rho, rel);
        const AsymmetrySplit sp = intensity_split(beta, 1.0, rel);
        j["beta"] = beta;
        j["rho_prime"] = rho;
        j["ladder"] = {{"P_L", q.P_L},         {"P_R", q.P_R},         {"u_L", q.u_L},
                       {"u_R", q.u_R},         {"delta_L", q.delta_L}, {"delta_R", q.delta_R}};
        j["split"] = {{"a_lm", sp.a_lm},     {"a_rm", sp.a_rm},     {"a_lp", sp.a_lp},
                      {"a_rp", sp.a_rp},     {"a_plus", sp.a_plus}, {"a_minus", sp.a_minus}};
    }
    const std::string text = j.dump(2) + "\n";
    std::cout << text;
    if (!out.empty()) write_file(out, text);
    return 0;
}

int cmd_sample_stable(const Globals& g, double alpha, double a_plus, double a_minus,
                      double horizon, double cutoff, const std::string& out) {
    const StableJumpLaw law{alpha, a_plus, a_minus};
    Rng rng(g.seed);
    const SkeletonPath p = sample_path(law, horizon, cutoff, 0.0, rng);
    std::string csv = "time,size,sign\n";
    for (const auto& j : p.jumps)
        csv += fmt_g(j.time) + "," + fmt_g(j.size) + "," + std::to_string(j.sign) + "\n";
    write_file(out, csv);
    json summary;
    summary["count"] = p.jumps.size();
    summary["compensator_drift"] = p.drift_rate;
    summary["terminal"] = p.terminal();
    summary["out"] = out;
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_sample_disk(const Globals& g, const std::string& mode, double kappa, double beta,
                    double y0, double floor, double horizon, double cutoff,
                    const std::string& out) {
    const KappaRelations rel = derive_relations(kappa);
    Rng rng(g.seed);
    std::string csv = "time,pre_state,size,sign,side,kind,post_state\n";
    json summary;
    if (mode == "policy") {
        const DiskRates rates{rel.alpha, rel.u, 1.0, DiskMode::policy};
        const DiskPath p = sample_disk_policy(rates, y0, horizon, floor, cutoff, rng);
        for (size_t i = 0; i < p.events.size(); ++i) {
            const auto& e = p.events[i];
            csv += fmt_g(e.time) + "," + fmt_g(p.pre_states[i]) + "," + fmt_g(e.size) + "," +
                   std::to_string(e.sign) + "," + side_name(e.side) + "," + kind_name(e.kind) +
                   "," + fmt_g(p.post_states[i]) + "\n";
        }
        summary["events"] = p.events.size();
        summary["terminal"] = p.terminal;
        summary["duration"] = p.duration;
        summary["reason"] = reason_name(p.reason);
    } else if (mode == "chordal") {
        const AsymmetrySplit sp = intensity_split(beta, 1.0, rel);
        // the configured boundary length splits evenly between the two sides
        const ChordalResult r = sample_disk_chordal(sp, rel.alpha, 0.5 * y0, 0.5 * y0, horizon,
                                                    cutoff, rng, floor);
        for (size_t i = 0; i < r.events.size(); ++i) {
            const auto& e = r.events[i];
            const double pre = r.pre_L[i] + r.pre_R[i];
            csv += fmt_g(e.time) + "," + fmt_g(pre) + "," + fmt_g(e.size) + "," +
                   std::to_string(e.sign) + "," + side_name(e.side) + "," + kind_name(e.kind) +
                   "," + fmt_g(pre + e.sign * e.size) + "\n";
        }
        summary["events"] = r.events.size();
        summary["terminal_left"] = r.L;
        summary["terminal_right"] = r.R;
        summary["duration"] = r.t;
        summary["reason"] = reason_name(r.reason);
    } else {
        throw std::domain_error("mode must be 'policy' or 'chordal'");
    }
    write_file(out, csv);
    summary["out"] = out;
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_grow_tree(const Globals& g, const std::string& variant_s, const std::string& policy_s,
                  double root_mass, double floor, long budget, double horizon,
                  const std::string& out) {
    const Variant variant = variant_s == "T" ? Variant::T : Variant::Ttilde;
    if (variant_s != "T" && variant_s != "Ttilde")
        throw std::domain_error("variant must be 'T' or 'Ttilde'");
    const BranchPolicy policy = parse_policy(policy_s);
    const KappaRelations rel = derive_relations(3.0);
    const DiskRates rates{rel.alpha, rel.u, 1.0, DiskMode::policy};
    StopRule stop;
    stop.kind = StopRule::Kind::mass_floor;
    stop.floor = floor > 0.0 ? floor : root_mass / 1024.0;
    SamplerOptions opt;
    opt.rel_cutoff = 0.085;
    opt.gaussian = true;
    opt.eta = 0.02;
    Rng rng(g.seed);
    const FragTree tree = grow_tree(rates, policy, variant, root_mass, stop, budget, rng, opt,
                                    horizon);
    json j;
    j["variant"] = variant_s;
    j["policy"] = policy_s;
    j["root_mass"] = tree.root_mass;
    j["floor"] = stop.floor;
    j["delta_cut"] = tree.delta_cut;
    j["truncated"] = tree.truncated;
    j["truncated_mass_fraction"] = tree.truncated_mass_fraction;
    j["particles"] = json::array();
    for (const auto& p : tree.particles)
        j["particles"].push_back({{"id", p.id},
                                  {"parent", p.parent},
                                  {"origin", origin_name(p.origin)},
                                  {"birth_mass", p.birth_mass},
                                  {"birth_depth", p.birth_depth},
                                  {"status", status_name(p.status)},
                                  {"final_mass", p.final_mass}});
    j["events"] = json::array();
    for (const auto& e : tree.events)
        j["events"].push_back({{"particle", e.particle},
                               {"time", e.time},
                               {"pre", e.pre},
                               {"size", e.size},
                               {"sign", e.sign},
                               {"post", e.post}});
    j["lines"] = tree.line_floors;
    j["labels"] = json::array();
    for (size_t li = 0; li < tree.line_labels.size(); ++li) {
        json lab = json::array();
        for (const auto& l : tree.line_labels[li])
            lab.push_back({{"mass", l.mass}, {"prov", prov_name(l.prov)},
                           {"skeleton", l.skeleton}});
        j["labels"].push_back(lab);
    }
    write_file(out, j.dump() + "\n");
    json summary = {{"particles", tree.particles.size()},
                    {"events", tree.events.size()},
                    {"lines", tree.line_floors.size()},
                    {"truncated", tree.truncated},
                    {"out", out}};
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_malthus(const Globals& g, double kappa, long trees, const std::string& out) {
    const ExitEnsemble ens = sample_exit_ensemble(kappa, trees, g.seed, Variant::Ttilde, 0.005,
                                                  g.threads);
    const MalthusReport rep = malthus_root_mc(ens);
    json j;
    j["kappa"] = kappa;
    j["trees"] = trees;
    j["analytic_delta"] = rep.analytic_delta;
    j["mc_root"] = rep.mc_root;
    j["mc_root_se"] = rep.mc_root_se;
    j["se_valid"] = rep.se_valid;
    j["cumulant_residual_at_delta"] = rep.cumulant_residual_at_delta;
    j["grid"] = json::array();
    for (const auto& p : rep.grid)
        j["grid"].push_back({{"q", p.q}, {"estimate", p.estimate}, {"se", p.se}});
    const std::string text = j.dump(2) + "\n";
    std::cout << text;
    if (!out.empty()) write_file(out, text);
    return 0;
}

int cmd_measure(const Globals& g, double kappa, long trees, std::vector<std::string> eps_toks,
                const std::string& out) {
    std::vector<double> epses;
    for (const auto& t : eps_toks) epses.push_back(parse_eps(t));
    if (epses.empty()) throw std::domain_error("measure: at least one --eps value required");
    std::sort(epses.rbegin(), epses.rend());
    FloorConfig fc;
    fc.kappa = kappa;
    for (double y = 0.5; y > epses.back(); y /= 2.0) fc.lines.push_back(y);
    fc.lines.push_back(epses.back());
    fc.n_trees = trees;
    fc.seed = g.seed;
    fc.threads = g.threads;
    for (double e : epses) fc.count_bands.push_back({e, 2.0 * e});
    const FloorEnsemble ens = run_floor_ensemble(fc);
    const double delta = ens.cascade_q;
    const int fin = (int)fc.lines.size() - 1;

    std::string csv = "tree_id,M_inf_hat,eps,rescaled_count\n";
    std::vector<std::vector<double>> rescaled(epses.size());
    std::vector<double> minf(ens.trees.size());
    for (size_t i = 0; i < ens.trees.size(); ++i) {
        minf[i] = ens.trees[i].casc_T[fin];
        for (size_t j = 0; j < epses.size(); ++j) {
            const double rc = std::pow(epses[j], delta) * ens.trees[i].counts[j];
            rescaled[j].push_back(rc);
            csv += std::to_string(i) + "," + fmt_g(minf[i]) + "," + fmt_g(epses[j]) + "," +
                   fmt_g(rc) + "\n";
        }
    }
    write_file(out, csv);

    json j;
    j["kappa"] = kappa;
    j["trees"] = trees;
    j["malthus_delta"] = delta;
    j["out"] = out;
    j["eps"] = json::array();
    for (size_t jj = 0; jj < epses.size(); ++jj) {
        const MeanSe ms = mean_se(rescaled[jj]);
        std::vector<double> ratio;
        for (size_t i = 0; i < minf.size(); ++i)
            if (minf[i] > 1e-12) ratio.push_back(rescaled[jj][i] / minf[i]);
        const MeanSe mr = mean_se(ratio);
        double var = 0.0;
        for (double r : ratio) var += (r - mr.mean) * (r - mr.mean);
        var = ratio.size() > 1 ? var / (ratio.size() - 1.0) : 0.0;
        j["eps"].push_back({{"eps", epses[jj]},
                            {"mean_rescaled", ms.mean},
                            {"se", ms.se},
                            {"corr_with_mass", pearson_corr(rescaled[jj], minf)},
                            {"ratio_cv", mr.mean > 0.0 ? std::sqrt(var) / mr.mean : 0.0}});
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_check(const Globals& g, std::vector<std::string> suites, bool quick,
              const std::string& format) {
    if (suites.empty()) suites = all_suite_names();
    for (const auto& s : suites) {
        const auto& all = all_suite_names();
        if (std::find(all.begin(), all.end(), s) == all.end())
            throw std::domain_error("unknown suite: " + s);
    }
    const SuiteScale sc = quick ? quick_scale(g.seed, g.threads) : full_scale(g.seed, g.threads);
    RunManifest m = run_suites(suites, g.out_dir, sc, kVersion);
    m.config = {{"seed", g.seed},     {"threads", g.threads}, {"out_dir", g.out_dir},
                {"suites", suites},   {"quick", quick}};
    json mj = manifest_json(m);
    // wall time varies run to run; the manifest file must be reproducible
    mj.erase("wall_seconds");
    write_file(g.out_dir + "/manifest.json", mj.dump(2) + "\n");
    std::cout << emit_report(m, format == "json" ? ReportFormat::json : ReportFormat::text);
    if (format != "json")
        std::cout << "wall time: " << fmt_g(m.wall_seconds) << " s\n";
    return m.all_pass() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"growth-fragmentation exploration toolkit"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "TOML configuration file");
    app.require_subcommand(1);
    app.fallthrough(); // accept global flags after the subcommand name

    Globals g;
    app.add_option("--seed", g.seed, "master seed (FRAG_EXPLORE_SEED overrides)");
    app.add_option("--threads", g.threads, "worker pool size")->check(CLI::PositiveNumber);
    app.add_option("--out-dir", g.out_dir, "output directory");

    // relations
    auto* rel = app.add_subcommand("relations", "exponent relations and the beta sweep");
    double r_kappa = 3.0, r_beta = 0.0;
    bool r_table = false;
    std::string r_out;
    rel->add_option("--kappa", r_kappa)->required();
    auto* beta_opt = rel->add_option("--beta", r_beta);
    rel->add_flag("--table", r_table, "emit the 201-row beta sweep CSV");
    rel->add_option("--out", r_out, "write to a file instead of stdout");

    // sample-stable
    auto* st = app.add_subcommand("sample-stable", "compensated stable path skeleton");
    double s_alpha = 4.0 / 3.0, s_ap = 1.0, s_am = 1.0, s_T = 1.0, s_cut = 0.01;
    std::string s_out = "stable_path.csv";
    st->add_option("--alpha", s_alpha);
    st->add_option("--a-plus", s_ap);
    st->add_option("--a-minus", s_am);
    st->add_option("--horizon", s_T);
    st->add_option("--cutoff", s_cut);
    st->add_option("--out", s_out);

    // sample-disk
    auto* dk = app.add_subcommand("sample-disk", "disk boundary-length process");
    std::string d_mode = "policy", d_out = "events.csv";
    double d_kappa = 3.0, d_beta = 0.0, d_y0 = 1.0, d_floor = 0.0, d_T = 1.0, d_cut = 0.01;
    dk->add_option("--mode", d_mode, "policy | chordal");
    dk->add_option("--kappa", d_kappa)->required();
    dk->add_option("--beta", d_beta);
    dk->add_option("--y0", d_y0);
    dk->add_option("--floor", d_floor);
    dk->add_option("--horizon", d_T);
    dk->add_option("--cutoff", d_cut);
    dk->add_option("--out", d_out);

    // grow-tree
    auto* gt = app.add_subcommand("grow-tree", "grow one fragmentation tree");
    std::string t_variant = "Ttilde", t_policy = "largest", t_out = "tree.json";
    double t_root = 1.0, t_floor = 0.0, t_horizon = std::numeric_limits<double>::infinity();
    long t_budget = 1'000'000;
    gt->add_option("--variant", t_variant, "T | Ttilde");
    gt->add_option("--policy", t_policy, "largest | q=VALUE");
    gt->add_option("--root-mass", t_root);
    gt->add_option("--floor", t_floor, "stop floor (default root/1024)");
    gt->add_option("--budget", t_budget);
    gt->add_option("--horizon", t_horizon, "per-particle time horizon");
    gt->add_option("--out", t_out);

    // malthus
    auto* ml = app.add_subcommand("malthus", "Monte Carlo Malthusian exponent");
    double m_kappa = 3.0;
    long m_trees = 1000;
    std::string m_out;
    ml->add_option("--kappa", m_kappa)->required();
    ml->add_option("--trees", m_trees)->check(CLI::PositiveNumber);
    ml->add_option("--out", m_out);

    // measure
    auto* ms = app.add_subcommand("measure", "carpet-measure estimator ensemble");
    double e_kappa = 3.0;
    long e_trees = 1000;
    std::vector<std::string> e_eps = {"2^-6", "2^-7", "2^-8"};
    std::string e_out = "measure_per_tree.csv";
    ms->add_option("--kappa", e_kappa)->required();
    ms->add_option("--trees", e_trees)->check(CLI::PositiveNumber);
    ms->add_option("--eps", e_eps)->delimiter(',');
    ms->add_option("--out", e_out);

    // check
    auto* ck = app.add_subcommand("check", "run the acceptance battery");
    std::vector<std::string> c_suites;
    bool c_quick = false;
    std::string c_format = "text";
    ck->add_option("--suite", c_suites, "subset of suites (default: all)");
    ck->add_flag("--quick", c_quick, "reduced sample sizes");
    ck->add_option("--format", c_format, "text | json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (const char* env = std::getenv("FRAG_EXPLORE_SEED")) {
        try {
            g.seed = std::stoull(env);
        } catch (...) {
            std::cerr << "error: FRAG_EXPLORE_SEED is not an integer\n";
            return 2;
        }
    }

    auto resolve = [&](const std::string& path) {
        if (path.empty() || path.front() == '/') return path;
        return g.out_dir + "/" + path;
    };

    try {
        if (rel->parsed())
            return cmd_relations(g, r_kappa, r_beta, beta_opt->count() > 0, r_table,
                                 r_out.empty() ? r_out : resolve(r_out));
        if (st->parsed())
            return cmd_sample_stable(g, s_alpha, s_ap, s_am, s_T, s_cut, resolve(s_out));
        if (dk->parsed())
            return cmd_sample_disk(g, d_mode, d_kappa, d_beta, d_y0, d_floor, d_T, d_cut,
                                   resolve(d_out));
        if (gt->parsed())
            return cmd_grow_tree(g, t_variant, t_policy, t_root, t_floor, t_budget, t_horizon,
                                 resolve(t_out));
        if (ml->parsed())
            return cmd_malthus(g, m_kappa, m_trees, m_out.empty() ? m_out : resolve(m_out));
        if (ms->parsed()) return cmd_measure(g, e_kappa, e_trees, e_eps, resolve(e_out));
        if (ck->parsed()) return cmd_check(g, c_suites, c_quick, c_format);
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
