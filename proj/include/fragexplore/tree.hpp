#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fragexplore/explore.hpp"
#include "fragexplore/rng.hpp"

namespace fragx {

// Growth-fragmentation trees. Variant T: negative jumps split off offspring.
// Variant Ttilde: positive jumps additionally spawn loop-offspring restarting
// as independent roots. Trees are truncated by a stop rule (exit interval,
// mass floor, or first positive jump) plus a hard particle budget.

enum class Variant { T, Ttilde };
enum class Origin { root, split_offspring, loop_offspring };
enum class ParticleStatus { active, stopped_at_line, truncated_by_budget };
enum class Provenance { discarded_split_piece, loop_jump, terminal_label };

struct StopRule {
    enum class Kind { exit_interval, mass_floor, first_positive_jump } kind = Kind::mass_floor;
    double lo = 0.5, hi = 2.0;      // exit_interval bounds
    double floor = 1.0 / 1024.0;    // mass_floor threshold
};

struct BranchPolicy {
    enum class Kind { follow_largest, q_weighted, chordal_none } kind = Kind::follow_largest;
    double q = 0.0; // q-weighted exponent, > alpha
};

enum class BranchChoice { follow_l, follow_other };

inline BranchChoice choose_branch(const BranchPolicy& policy, double l, double total, Rng& rng) {
    if (!(l > 0.0 && l < total)) throw std::domain_error("choose_branch: need 0 < l < total");
    switch (policy.kind) {
    case BranchPolicy::Kind::follow_largest:
        return l > total - l ? BranchChoice::follow_l : BranchChoice::follow_other;
    case BranchPolicy::Kind::q_weighted: {
        const double lq = std::pow(l, policy.q);
        const double oq = std::pow(total - l, policy.q);
        return rng.uniform() < lq / (lq + oq) ? BranchChoice::follow_l : BranchChoice::follow_other;
    }
    default:
        throw std::domain_error("choose_branch: policy does not branch");
    }
}

struct Particle {
    long id = 0;
    long parent = -1;
    Origin origin = Origin::root;
    double birth_mass = 0.0;
    int birth_depth = 0;
    ParticleStatus status = ParticleStatus::active;
    double final_mass = 0.0;
};

struct LineLabel {
    double mass;
    Provenance prov;
    bool skeleton; // no loop-offspring ancestor and not itself a loop jump
};

struct StoppingLineResult {
    std::vector<LineLabel> labels; // sorted descending by mass
    StopRule rule;
};

struct GrowConfig {
    DiskRates rates;
    BranchPolicy policy;
    Variant variant = Variant::Ttilde;
    bool grow_loops = true;   // Ttilde only: grow loop-offspring (false: record births)
    double root_mass = 1.0;
    StopRule stop;
    // registered mass-floor lines, strictly decreasing, last == stop.floor
    std::vector<double> lines;
    long budget = 1'000'000;  // max grown particles
    double horizon = std::numeric_limits<double>::infinity();
    SamplerOptions opt;
};

struct GrowStats {
    long particles = 0;
    bool truncated = false;
    double truncated_mass_fraction = 0.0; // sum (m/root)^2 over dropped particles
    long proposals = 0;
    long substeps = 0;
};

// Collector: streaming sink for tree growth. Override what you need.
struct NullCollector {
    void label(int /*line*/, double /*mass*/, Provenance, bool /*skeleton*/) {}
    // occupation of state y for duration h with cutoff delta; lines
    // [head, nlines) are still active; band is the quantized index or -1
    void occupation(int /*head*/, bool /*skeleton*/, int /*band*/, double /*h*/, double /*y*/,
                    double /*delta*/) {}
    void jump(double /*t*/, double /*y_pre*/, double /*l*/, int /*sign*/, bool /*skeleton*/,
              int /*head*/) {}
    void sub_birth(double /*t*/, double /*y*/, double /*l*/, int /*sign*/, bool /*skeleton*/,
                   int /*head*/) {}
    void particle_begin(const Particle&) {}
    void particle_end(long /*id*/, double /*final_mass*/, ParticleStatus) {}
    void frozen_child(const Particle&) {}
    void event(long /*pid*/, double /*t*/, double /*pre*/, double /*l*/, int /*sign*/,
               double /*post*/, long /*child*/, int /*head*/, bool /*resolved_sub*/) {}
};

namespace detail {

struct PendingParticle {
    double mass;
    std::uint64_t key;
    int depth;
    long parent;
    Origin origin;
    int head; // index of the coarsest still-active registered line
    bool skeleton;
};

template <class C>
struct GrowObserver {
    const GrowConfig* cfg;
    C* col;
    std::vector<PendingParticle>* stack;
    Rng* prng;
    long id;
    std::uint64_t key;
    int depth;
    bool skeleton;
    int head;
    int nlines;
    long child_seq = 0;
    long* next_id_hint; // for budget checks on pushes (soft; enforced at pop)

    void emit_label(int line, double m, Provenance p, bool skel) {
        col->label(line, m, p, skel);
    }

    // a child of mass m is born (split piece or loop); freeze or enqueue
    void handle_child(double m, Origin o, double /*t*/) {
        const bool child_skel = skeleton && o != Origin::loop_offspring;
        const Provenance prov = o == Origin::loop_offspring ? Provenance::loop_jump
                                                            : Provenance::discarded_split_piece;
        if (cfg->stop.kind != StopRule::Kind::mass_floor) {
            // exit-interval / first-positive-jump rules freeze offspring at birth
            emit_label(0, m, prov, skeleton);
            return;
        }
        const auto& fl = cfg->lines;
        int chead = head;
        while (chead < nlines && m < fl[chead]) {
            emit_label(chead, m, prov, skeleton);
            ++chead;
        }
        if (chead == nlines) return; // crossed every active line at birth
        if (m <= fl[nlines - 1]) {
            // sits exactly on the stop floor: treat as crossed everywhere
            for (int j = chead; j < nlines; ++j) emit_label(j, m, prov, skeleton);
            return;
        }
        if (o == Origin::loop_offspring && !cfg->grow_loops) return; // recorded only
        stack->push_back({m, derive_key(key, (std::uint64_t)child_seq,
                                        o == Origin::loop_offspring ? 2u : 3u),
                          depth + 1, id, o, chead, child_skel});
    }

    void substep(double /*t*/, double y, double h, double delta, int band) {
        col->occupation(head, skeleton, band, h, y, delta);
    }

    bool moved(double t, double y) {
        while (head < nlines && y < cfg->lines[head]) {
            emit_label(head, y, Provenance::terminal_label, skeleton);
            col->event(id, t, y, 0.0, 0, y, -1, head, false);
            ++head;
        }
        return false;
    }

    StepControl jump(double t, double y, double l, int sign) {
        ++child_seq;
        col->jump(t, y, l, sign, skeleton, head);
        if (sign > 0) {
            const double post = y + l;
            col->event(id, t, y, l, +1, post, -1, head, false);
            if (cfg->stop.kind == StopRule::Kind::first_positive_jump) return {post, true};
            if (cfg->variant == Variant::Ttilde) handle_child(l, Origin::loop_offspring, t);
            return {post, false};
        }
        double cont = y - l, other = l;
        if (cfg->policy.kind == BranchPolicy::Kind::q_weighted &&
            choose_branch(cfg->policy, l, y, *prng) == BranchChoice::follow_l) {
            cont = l;
            other = y - l;
        }
        col->event(id, t, y, l, -1, cont, -1, head, false);
        handle_child(other, Origin::split_offspring, t);
        moved(t, cont); // line crossings take the post-jump overshoot as label
        return {cont, false};
    }

    void sub_birth(double t, double y, double l, int sign) {
        ++child_seq;
        col->sub_birth(t, y, l, sign, skeleton, head);
        col->event(id, t, y, l, sign, y, -1, head, true);
        if (sign > 0) {
            if (cfg->stop.kind == StopRule::Kind::first_positive_jump) return; // sub-cutoff: ignore
            if (cfg->variant == Variant::Ttilde) handle_child(l, Origin::loop_offspring, t);
        } else {
            handle_child(l, Origin::split_offspring, t);
        }
    }
};

} // namespace detail

// Depth-first streaming growth; every particle gets a lineage-derived RNG
// stream so the law is independent of traversal order.
template <class C>
GrowStats grow_tree_stream(const GrowConfig& cfg, std::uint64_t tree_key, C& col) {
    if (!(cfg.root_mass > 0.0) || cfg.budget <= 0)
        throw std::domain_error("grow_tree_stream: root_mass > 0 and budget > 0 required");
    const bool mass_rule = cfg.stop.kind == StopRule::Kind::mass_floor;
    if (mass_rule) {
        if (cfg.lines.empty() || cfg.lines.back() != cfg.stop.floor)
            throw std::domain_error("grow_tree_stream: lines must end at the stop floor");
        for (size_t i = 1; i < cfg.lines.size(); ++i)
            if (!(cfg.lines[i] < cfg.lines[i - 1]))
                throw std::domain_error("grow_tree_stream: lines must be strictly decreasing");
    }
    const int nlines = mass_rule ? (int)cfg.lines.size() : 0;
    double floor = 0.0, ceiling = std::numeric_limits<double>::infinity();
    if (mass_rule) floor = cfg.stop.floor;
    if (cfg.stop.kind == StopRule::Kind::exit_interval) {
        floor = cfg.stop.lo;
        ceiling = cfg.stop.hi;
    }

    GrowStats st;
    std::vector<detail::PendingParticle> stack;
    int root_head = 0;
    if (mass_rule)
        while (root_head < nlines && cfg.root_mass < cfg.lines[root_head]) {
            col.label(root_head, cfg.root_mass, Provenance::terminal_label, true);
            ++root_head;
        }
    stack.push_back({cfg.root_mass, derive_key(tree_key, 0, 1), 0, -1, Origin::root,
                     root_head, true});
    long next_id = 0;
    while (!stack.empty()) {
        detail::PendingParticle p = stack.back();
        stack.pop_back();
        if (next_id >= cfg.budget) {
            st.truncated = true;
            const double f = p.mass / cfg.root_mass;
            st.truncated_mass_fraction += f * f;
            Particle rec{next_id++, p.parent, p.origin, p.mass, p.depth,
                         ParticleStatus::truncated_by_budget, p.mass};
            col.particle_begin(rec);
            col.particle_end(rec.id, p.mass, ParticleStatus::truncated_by_budget);
            continue;
        }
        const long id = next_id++;
        ++st.particles;
        col.particle_begin({id, p.parent, p.origin, p.mass, p.depth, ParticleStatus::active,
                            0.0});
        Rng prng(derive_key(p.key, 0x51u));
        detail::GrowObserver<C> obs{&cfg, &col, &stack, &prng, id, p.key, p.depth,
                                    p.skeleton, p.head, nlines, 0, &next_id};
        SimResult r = simulate_policy(cfg.rates, p.mass, cfg.horizon, floor, ceiling,
                                      cfg.opt, prng, obs);
        st.proposals += r.proposals;
        st.substeps += r.substeps;
        ParticleStatus status = ParticleStatus::stopped_at_line;
        if (r.reason == StopReason::ops_budget) {
            st.truncated = true;
            const double f = r.y / cfg.root_mass;
            st.truncated_mass_fraction += f * f;
            status = ParticleStatus::truncated_by_budget;
        } else if (mass_rule) {
            for (int j = obs.head; j < nlines; ++j)
                col.label(j, r.y, Provenance::terminal_label, p.skeleton);
        } else {
            col.label(0, r.y, Provenance::terminal_label, p.skeleton);
        }
        col.particle_end(id, r.y, status);
    }
    return st;
}

// ---------------------------------------------------------------------------
// Recorded trees: full particle/event lists for the spec-facing operations.

struct TreeEvent {
    long particle;
    double time;
    double pre;     // state before the event
    double size;    // jump size (0 for a line-crossing marker)
    int sign;       // +1 / -1 / 0 (crossing marker)
    double post;    // state after
    int head;       // coarsest active line index at event time
    bool resolved_sub; // sub-cutoff birth resolved by enumeration
};

struct FragTree {
    Variant variant = Variant::Ttilde;
    BranchPolicy policy;
    DiskRates rates;
    double root_mass = 1.0;
    StopRule rule;
    std::vector<Particle> particles;
    std::vector<TreeEvent> events;
    std::vector<double> line_floors;                  // registered lines (descending)
    std::vector<std::vector<LineLabel>> line_labels;  // parallel to line_floors
    double delta_cut = 0.0; // finest resolved jump size
    bool truncated = false;
    double truncated_mass_fraction = 0.0;

    // occupation moments sum h * y^{-m}, m = 0..3, per (line, dust band), for
    // all particles and for the skeleton subset; dust_tops holds the per-band
    // ceiling below which offspring were folded into drift instead of labels
    std::vector<double> dust_tops;
    std::vector<double> occ_all, occ_skel; // line_floors.size() * dust_tops.size() * 4

    // exact conditional moment sum_{sub-ceiling offspring} l^q for labels the
    // cutoff suppressed while the given line was active
    double dust_moment(size_t line, double q, bool up, bool dn, bool skeleton_only) const {
        if (dust_tops.empty() || occ_all.empty()) return 0.0;
        const PolicyCoeffs pc(rates.alpha, rates.a_plus, rates.a_minus);
        const std::vector<double>& occ = skeleton_only ? occ_skel : occ_all;
        double s = 0.0;
        for (size_t k = 0; k < dust_tops.size(); ++k) {
            const size_t base = (line * dust_tops.size() + k) * 4;
            if (occ[base] > 0.0) s += dust_integral(pc, q, 0.0, dust_tops[k], up, dn, &occ[base]);
        }
        return s;
    }

    // labels at the growth stop rule (mass-floor: the finest line)
    StoppingLineResult stop_line() const {
        StoppingLineResult res;
        res.rule = rule;
        res.labels = line_labels.empty() ? std::vector<LineLabel>{} : line_labels.back();
        return res;
    }
};

namespace detail {

struct RecordingCollector : NullCollector {
    FragTree* tree;
    long cur = -1;
    void label(int line, double mass, Provenance p, bool skeleton) {
        tree->line_labels[line].push_back({mass, p, skeleton && p != Provenance::loop_jump});
    }
    void occupation(int head, bool skeleton, int band, double h, double y, double) {
        const int nb = (int)tree->dust_tops.size();
        if (nb == 0) return;
        int k = band < 0 ? 0 : (band >= nb ? nb - 1 : band);
        const double iy = 1.0 / y;
        const double m1 = h * iy, m2 = m1 * iy, m3 = m2 * iy;
        const int nlines = (int)tree->line_floors.size();
        for (int l = head; l < nlines; ++l) {
            const size_t base = ((size_t)l * nb + k) * 4;
            tree->occ_all[base] += h;
            tree->occ_all[base + 1] += m1;
            tree->occ_all[base + 2] += m2;
            tree->occ_all[base + 3] += m3;
            if (skeleton) {
                tree->occ_skel[base] += h;
                tree->occ_skel[base + 1] += m1;
                tree->occ_skel[base + 2] += m2;
                tree->occ_skel[base + 3] += m3;
            }
        }
    }
    void particle_begin(const Particle& p) {
        tree->particles.push_back(p);
        cur = p.id;
    }
    void particle_end(long id, double final_mass, ParticleStatus status) {
        tree->particles[id].final_mass = final_mass;
        tree->particles[id].status = status;
    }
    void event(long pid, double t, double pre, double l, int sign, double post, long child,
               int head, bool sub) {
        (void)child;
        tree->events.push_back({pid, t, pre, l, sign, post, head, sub});
    }
};

} // namespace detail

// Spec-facing growth: records particles, events, and labels at every dyadic
// line root*2^{-j} down to the stop floor (mass-floor rule).
inline FragTree grow_tree(const DiskRates& rates, const BranchPolicy& policy, Variant variant,
                          double root_mass, const StopRule& stop, long budget, Rng& rng,
                          SamplerOptions opt = {},
                          double horizon = std::numeric_limits<double>::infinity()) {
    GrowConfig cfg;
    cfg.rates = rates;
    cfg.policy = policy;
    cfg.variant = variant;
    cfg.root_mass = root_mass;
    cfg.stop = stop;
    cfg.budget = budget;
    cfg.horizon = horizon; // per particle; unbiased for the line martingales
    if (stop.kind == StopRule::Kind::mass_floor) {
        if (!(stop.floor > 0.0 && stop.floor < root_mass))
            throw std::domain_error("grow_tree: need 0 < floor < root_mass");
        for (double y = root_mass / 2.0; y > stop.floor; y /= 2.0) cfg.lines.push_back(y);
        cfg.lines.push_back(stop.floor);
        if (opt.rel_cutoff > 0.0 && opt.grid_floor == 0.0) opt.grid_floor = stop.floor;
    }
    cfg.opt = opt;

    FragTree tree;
    tree.variant = variant;
    tree.policy = policy;
    tree.rates = rates;
    tree.root_mass = root_mass;
    tree.rule = stop;
    tree.line_floors = cfg.lines;
    if (stop.kind != StopRule::Kind::mass_floor) tree.line_floors = {0.0};
    tree.line_labels.resize(tree.line_floors.size());
    tree.delta_cut = opt.rel_cutoff > 0.0
                         ? (opt.enum_floor > 0.0 ? opt.enum_floor
                                                 : opt.rel_cutoff * (stop.kind == StopRule::Kind::mass_floor
                                                                         ? stop.floor
                                                                         : root_mass))
                         : (opt.enum_floor > 0.0 ? std::min(opt.enum_floor, opt.abs_cutoff)
                                                 : opt.abs_cutoff);
    if (opt.rel_cutoff > 0.0 && opt.grid_floor > 0.0) {
        DustGrid dg{opt.grid_floor, opt.rel_cutoff, opt.enum_floor};
        tree.dust_tops.resize(DustGrid::NB);
        for (int k = 0; k < DustGrid::NB; ++k) tree.dust_tops[k] = dg.top(k);
    } else if (opt.rel_cutoff == 0.0) {
        tree.dust_tops = {opt.enum_floor > 0.0 ? std::min(opt.enum_floor, opt.abs_cutoff)
                                               : opt.abs_cutoff};
    } // relative cutoff without a band grid: tops are not a function of the
      // band index, so no dust accounting is recorded
    tree.occ_all.assign(tree.line_floors.size() * tree.dust_tops.size() * 4, 0.0);
    tree.occ_skel.assign(tree.occ_all.size(), 0.0);

    detail::RecordingCollector col;
    col.tree = &tree;
    GrowStats st = grow_tree_stream(cfg, rng.next_u64(), col);
    tree.truncated = st.truncated;
    tree.truncated_mass_fraction = st.truncated_mass_fraction;
    for (auto& labels : tree.line_labels)
        std::sort(labels.begin(), labels.end(),
                  [](const LineLabel& a, const LineLabel& b) { return a.mass > b.mass; });
    return tree;
}

inline StoppingLineResult stopping_line(const FragTree& tree, double y) {
    if (tree.rule.kind != StopRule::Kind::mass_floor)
        throw std::domain_error("stopping_line: tree was not grown with a mass-floor rule");
    if (y < tree.rule.floor)
        throw std::domain_error("stopping_line: tree floor is coarser than the requested line");
    for (size_t i = 0; i < tree.line_floors.size(); ++i) {
        if (std::fabs(tree.line_floors[i] - y) <= 1e-12 * y) {
            StoppingLineResult res;
            res.rule.kind = StopRule::Kind::mass_floor;
            res.rule.floor = y;
            res.labels = tree.line_labels[i];
            return res;
        }
    }
    throw std::domain_error("stopping_line: y is not a registered line of this tree");
}

enum class CountScope { whole_tree, before_line };

// exact count of recorded jump events with size in [x_lo, x_hi] and the given
// sign; before_line restricts to events on lineage segments that had not yet
// crossed the registered line at y
inline long count_jumps(const FragTree& tree, double x_lo, double x_hi, int sign,
                        CountScope scope = CountScope::whole_tree, double y = 0.0) {
    if (!(x_lo > 0.0)) throw std::domain_error("count_jumps: band must be positive");
    if (x_lo < tree.delta_cut)
        throw std::domain_error("count_jumps: band below the resolved scale delta_cut");
    int line = -1;
    if (scope == CountScope::before_line) {
        for (size_t i = 0; i < tree.line_floors.size(); ++i)
            if (std::fabs(tree.line_floors[i] - y) <= 1e-12 * y) line = (int)i;
        if (line < 0) throw std::domain_error("count_jumps: y is not a registered line");
    }
    long n = 0;
    for (const auto& e : tree.events) {
        if (e.sign != sign || e.size < x_lo || e.size > x_hi) continue;
        if (line >= 0 && e.head > line) continue;
        ++n;
    }
    return n;
}

} // namespace fragx
