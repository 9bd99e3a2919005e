#include <catch2/catch_amalgamated.hpp>

#include "fragexplore/stats.hpp"
#include "fragexplore/tree.hpp"

using namespace fragx;

namespace {
KappaRelations R3 = derive_relations(3.0);
DiskRates rates3() { return {R3.alpha, R3.u, 1.0, DiskMode::policy}; }
}

TEST_CASE("choose_branch: deterministic and weighted rules") {
    Rng rng(1);
    BranchPolicy fl{BranchPolicy::Kind::follow_largest, 0.0};
    CHECK(choose_branch(fl, 0.3, 1.0, rng) == BranchChoice::follow_other);
    CHECK(choose_branch(fl, 0.7, 1.0, rng) == BranchChoice::follow_l);
    CHECK_THROWS_AS(choose_branch(fl, 0.0, 1.0, rng), std::domain_error);
    CHECK_THROWS_AS(choose_branch(fl, 1.0, 1.0, rng), std::domain_error);
    BranchPolicy none{BranchPolicy::Kind::chordal_none, 0.0};
    CHECK_THROWS_AS(choose_branch(none, 0.5, 1.0, rng), std::domain_error);

    // q-weighted: l = total/2 picks each side with probability 1/2
    BranchPolicy qw{BranchPolicy::Kind::q_weighted, 11.0 / 6.0};
    const long N = 100000;
    long pick_l = 0;
    for (long i = 0; i < N; ++i)
        if (choose_branch(qw, 0.5, 1.0, rng) == BranchChoice::follow_l) ++pick_l;
    CHECK(std::fabs(pick_l - 0.5 * N) < 4.0 * 0.5 * std::sqrt((double)N));

    // frozen weight at l = 1/4, total = 1, q = 11/6
    const double q = 11.0 / 6.0;
    const double p = std::pow(0.25, q) / (std::pow(0.25, q) + std::pow(0.75, q));
    pick_l = 0;
    for (long i = 0; i < N; ++i)
        if (choose_branch(qw, 0.25, 1.0, rng) == BranchChoice::follow_l) ++pick_l;
    CHECK(std::fabs(pick_l - p * N) < 4.0 * std::sqrt(p * (1.0 - p) * N));
}

TEST_CASE("grow_tree: no down jumps means a single branch") {
    DiskRates r{R3.alpha, 1.0, 0.0, DiskMode::policy}; // up jumps only
    BranchPolicy fl{BranchPolicy::Kind::follow_largest, 0.0};
    StopRule stop;
    stop.kind = StopRule::Kind::mass_floor;
    stop.floor = 1.0 / 16.0;
    Rng rng(42);
    SamplerOptions opt;
    opt.abs_cutoff = 0.02;
    FragTree t = grow_tree(r, fl, Variant::T, 1.0, stop, 1000, rng, opt);
    // variant T ignores positive jumps entirely: one particle, one label per line
    CHECK(t.particles.size() == 1);
    REQUIRE(t.line_floors.size() == 4); // 1/2, 1/4, 1/8, 1/16
    for (size_t i = 0; i < t.line_floors.size(); ++i) {
        REQUIRE(t.line_labels[i].size() == 1);
        CHECK(t.line_labels[i][0].prov == Provenance::terminal_label);
        CHECK(t.line_labels[i][0].skeleton);
        CHECK(t.line_labels[i][0].mass <= t.line_floors[i]);
    }
    CHECK_FALSE(t.truncated);
}

TEST_CASE("grow_tree: exit-interval rule freezes offspring at birth") {
    BranchPolicy fl{BranchPolicy::Kind::follow_largest, 0.0};
    StopRule stop;
    stop.kind = StopRule::Kind::exit_interval;
    stop.lo = 0.5;
    stop.hi = 2.0;
    Rng rng(7);
    SamplerOptions opt;
    opt.abs_cutoff = 0.01;
    long terminal_total = 0, other_total = 0;
    for (int rep = 0; rep < 50; ++rep) {
        FragTree t = grow_tree(rates3(), fl, Variant::Ttilde, 1.0, stop, 1000, rng, opt);
        CHECK(t.particles.size() == 1); // offspring are never grown under this rule
        auto line = t.stop_line();
        long terminal = 0;
        for (const auto& lab : line.labels) {
            CHECK(lab.mass > 0.0);
            if (lab.prov == Provenance::terminal_label) {
                ++terminal;
                // the exit value either overshoots 2 upward or is in (0, lo]
                CHECK((lab.mass >= 2.0 || lab.mass <= 0.5));
            } else {
                // frozen split pieces obey the halving bound; loop marks are
                // raw jump sizes
                if (lab.prov == Provenance::discarded_split_piece) CHECK(lab.mass < 1.0);
                ++other_total;
            }
        }
        CHECK(terminal == 1);
        terminal_total += terminal;
        // labels are sorted descending
        for (size_t i = 1; i < line.labels.size(); ++i)
            CHECK(line.labels[i].mass <= line.labels[i - 1].mass);
    }
    CHECK(terminal_total == 50);
    CHECK(other_total > 200);
}

TEST_CASE("grow_tree: line labels sit under their lines, counts grow finer") {
    BranchPolicy fl{BranchPolicy::Kind::follow_largest, 0.0};
    StopRule stop;
    stop.kind = StopRule::Kind::mass_floor;
    stop.floor = 1.0 / 32.0;
    Rng rng(99);
    SamplerOptions opt;
    opt.abs_cutoff = 0.01;
    for (int rep = 0; rep < 12; ++rep) {
        FragTree t = grow_tree(rates3(), fl, Variant::Ttilde, 1.0, stop, 100000, rng, opt, 20.0);
        REQUIRE_FALSE(t.truncated);
        size_t prev = 0;
        for (size_t i = 0; i < t.line_floors.size(); ++i) {
            for (const auto& lab : t.line_labels[i]) {
                CHECK(lab.mass <= t.line_floors[i] * (1.0 + 1e-12));
                CHECK(lab.mass > 0.0);
            }
            // every label at a coarser line has descendants at every finer line
            CHECK(t.line_labels[i].size() >= prev);
            prev = t.line_labels[i].size();
        }
        // down events follow the largest piece: post = pre - size, size < pre/2
        for (const auto& e : t.events)
            if (e.sign < 0 && !e.resolved_sub) {
                CHECK(e.post == Catch::Approx(e.pre - e.size));
                CHECK(e.size < e.pre / 2.0);
            }
    }
}

TEST_CASE("grow_tree: skeleton flags separate loop descendants") {
    BranchPolicy fl{BranchPolicy::Kind::follow_largest, 0.0};
    StopRule stop;
    stop.kind = StopRule::Kind::mass_floor;
    stop.floor = 1.0 / 16.0;
    SamplerOptions opt;
    opt.abs_cutoff = 0.01;

    // no up jumps: everything is skeleton
    DiskRates down_only{R3.alpha, 0.0, 1.0, DiskMode::policy};
    Rng rng(11);
    FragTree t1 = grow_tree(down_only, fl, Variant::Ttilde, 1.0, stop, 100000, rng, opt);
    for (const auto& labels : t1.line_labels)
        for (const auto& lab : labels) CHECK(lab.skeleton);

    // with up jumps, loop labels are never skeleton and both kinds appear;
    // modest horizon and budget: the event record of a heavy-tailed Ttilde
    // tree can exhaust memory, and these are structural checks only
    long skel = 0, nonskel = 0, loops = 0;
    for (int rep = 0; rep < 6; ++rep) {
        FragTree t2 = grow_tree(rates3(), fl, Variant::Ttilde, 1.0, stop, 4000, rng, opt, 10.0);
        for (const auto& labels : t2.line_labels)
            for (const auto& lab : labels) {
                if (lab.prov == Provenance::loop_jump) {
                    ++loops;
                    CHECK_FALSE(lab.skeleton);
                }
                (lab.skeleton ? skel : nonskel)++;
            }
    }
    CHECK(skel > 0);
    CHECK(nonskel > 0);
    CHECK(loops > 0);
    CHECK(nonskel >= loops); // loop descendants add further non-skeleton labels
}

TEST_CASE("grow_tree: first positive jump stops the growth") {
    BranchPolicy fl{BranchPolicy::Kind::follow_largest, 0.0};
    StopRule stop;
    stop.kind = StopRule::Kind::first_positive_jump;
    Rng rng(17);
    SamplerOptions opt;
    opt.abs_cutoff = 0.05;
    long stopped_by_jump = 0;
    for (int rep = 0; rep < 40; ++rep) {
        FragTree t = grow_tree(rates3(), fl, Variant::Ttilde, 1.0, stop, 1000, rng, opt, 5.0);
        CHECK(t.particles.size() == 1);
        long pos = 0;
        for (const auto& e : t.events)
            if (e.sign > 0 && !e.resolved_sub) ++pos;
        CHECK(pos <= 1);
        if (pos == 1) {
            ++stopped_by_jump;
            const auto& last = t.events.back();
            CHECK(last.sign > 0);
            CHECK(last.post == Catch::Approx(last.pre + last.size));
        }
    }
    CHECK(stopped_by_jump > 20);
}

TEST_CASE("grow_tree: particle budget truncates and flags the tree") {
    BranchPolicy fl{BranchPolicy::Kind::follow_largest, 0.0};
    StopRule stop;
    stop.kind = StopRule::Kind::mass_floor;
    stop.floor = 1.0 / 256.0;
    Rng rng(23);
    SamplerOptions opt;
    opt.abs_cutoff = 0.01;
    FragTree t = grow_tree(rates3(), fl, Variant::Ttilde, 1.0, stop, 5, rng, opt, 20.0);
    CHECK(t.truncated);
    CHECK(t.truncated_mass_fraction > 0.0);
    long trunc = 0;
    for (const auto& p : t.particles)
        if (p.status == ParticleStatus::truncated_by_budget) {
            ++trunc;
            CHECK(p.final_mass == p.birth_mass);
        }
    CHECK(trunc > 0);
}

TEST_CASE("stopping_line: lookup, domain errors") {
    BranchPolicy fl{BranchPolicy::Kind::follow_largest, 0.0};
    StopRule stop;
    stop.kind = StopRule::Kind::mass_floor;
    stop.floor = 1.0 / 16.0;
    Rng rng(31);
    SamplerOptions opt;
    opt.abs_cutoff = 0.02;
    FragTree t = grow_tree(rates3(), fl, Variant::Ttilde, 1.0, stop, 100000, rng, opt, 20.0);
    auto quarter = stopping_line(t, 0.25);
    CHECK(quarter.rule.floor == 0.25);
    CHECK(quarter.labels.size() == t.line_labels[1].size());
    CHECK_THROWS_AS(stopping_line(t, 0.3), std::domain_error);     // not registered
    CHECK_THROWS_AS(stopping_line(t, 1.0 / 64.0), std::domain_error); // below the floor

    StopRule exit;
    exit.kind = StopRule::Kind::exit_interval;
    FragTree te = grow_tree(rates3(), fl, Variant::Ttilde, 1.0, exit, 1000, rng, opt);
    CHECK_THROWS_AS(stopping_line(te, 0.25), std::domain_error);
}

TEST_CASE("count_jumps: bands, scopes, resolution guard") {
    BranchPolicy fl{BranchPolicy::Kind::follow_largest, 0.0};
    StopRule stop;
    stop.kind = StopRule::Kind::mass_floor;
    stop.floor = 1.0 / 32.0;
    Rng rng(37);
    SamplerOptions opt;
    opt.abs_cutoff = 0.01;
    FragTree t = grow_tree(rates3(), fl, Variant::Ttilde, 1.0, stop, 100000, rng, opt, 20.0);
    CHECK_THROWS_AS(count_jumps(t, 0.0, 1.0, +1), std::domain_error);
    CHECK_THROWS_AS(count_jumps(t, 0.005, 1.0, +1), std::domain_error); // below delta_cut
    CHECK(count_jumps(t, 50.0, 100.0, +1) == 0);
    const long up_all = count_jumps(t, 0.01, 10.0, +1);
    const long dn_all = count_jumps(t, 0.01, 10.0, -1);
    CHECK(up_all > 0);
    CHECK(dn_all > 0);
    // scope restriction can only reduce the count
    const long up_before = count_jumps(t, 0.01, 10.0, +1, CountScope::before_line, 0.5);
    CHECK(up_before <= up_all);
    CHECK_THROWS_AS(count_jumps(t, 0.01, 10.0, +1, CountScope::before_line, 0.3),
                    std::domain_error);
}

TEST_CASE("count_jumps: band counts dominated by split counts, stable in scale") {
    // mean up-count in [y/2, y] before crossing 2y stays below the matching
    // down-count, uniformly over dyadic scales
    BranchPolicy fl{BranchPolicy::Kind::follow_largest, 0.0};
    StopRule stop;
    stop.kind = StopRule::Kind::mass_floor;
    stop.floor = 1.0 / 32.0;
    SamplerOptions opt;
    opt.abs_cutoff = 0.01;
    Rng rng(41);
    const int NT = 60;
    std::array<double, 2> ys = {1.0 / 8.0, 1.0 / 16.0};
    std::array<double, 2> ratio{};
    for (size_t k = 0; k < ys.size(); ++k) {
        const double y = ys[k];
        long nup = 0, ndn = 0;
        for (int rep = 0; rep < NT; ++rep) {
            FragTree t = grow_tree(rates3(), fl, Variant::Ttilde, 1.0, stop, 100000, rng, opt, 20.0);
            nup += count_jumps(t, y / 2.0, y, +1, CountScope::before_line, 2.0 * y);
            ndn += count_jumps(t, y / 2.0, y, -1, CountScope::before_line, 2.0 * y);
        }
        REQUIRE(ndn > 100);
        ratio[k] = (double)nup / (double)ndn;
        INFO("y=" << y << " up " << nup << " down " << ndn << " ratio " << ratio[k]);
        CHECK(ratio[k] < 2.0);
        CHECK(ratio[k] > 0.0);
    }
    // comparable across scales (same order of magnitude)
    CHECK(ratio[0] < 3.0 * ratio[1]);
    CHECK(ratio[1] < 3.0 * ratio[0]);
}

TEST_CASE("mass martingale sanity at a dyadic line") {
    // E[sum of squared labels] at a first-passage line is the squared root
    // mass, once the realized labels are completed by the sub-cutoff dust
    // (positive sub-cutoff jumps would have been loop labels, so the dust
    // counts both signs). The per-tree sum is heavy tailed -- the largest
    // loop label has tail index 2*alpha + 1, so the square has infinite
    // variance -- which keeps this a loose sanity check at this sample size.
    BranchPolicy fl{BranchPolicy::Kind::follow_largest, 0.0};
    StopRule stop;
    stop.kind = StopRule::Kind::mass_floor;
    stop.floor = 1.0 / 8.0;
    SamplerOptions opt;
    opt.abs_cutoff = 0.01;
    opt.gaussian = true;
    Rng rng(53);
    std::vector<double> sums;
    for (int rep = 0; rep < 100; ++rep) {
        FragTree t = grow_tree(rates3(), fl, Variant::Ttilde, 1.0, stop, 200000, rng, opt, 20.0);
        REQUIRE_FALSE(t.truncated);
        double s = t.dust_moment(t.line_floors.size() - 1, 2.0, true, true, false);
        for (const auto& lab : t.stop_line().labels) s += lab.mass * lab.mass;
        sums.push_back(s);
    }
    MeanSe m = mean_se(sums);
    INFO("sum of squares " << m.mean << " +- " << m.se);
    CHECK(m.mean > 0.75);
    CHECK(m.mean < 1.35);
}

TEST_CASE("grow_tree: determinism under a fixed seed") {
    BranchPolicy fl{BranchPolicy::Kind::follow_largest, 0.0};
    StopRule stop;
    stop.kind = StopRule::Kind::mass_floor;
    stop.floor = 1.0 / 32.0;
    SamplerOptions opt;
    opt.abs_cutoff = 0.01;
    Rng r1(777), r2(777);
    FragTree a = grow_tree(rates3(), fl, Variant::Ttilde, 1.0, stop, 100000, r1, opt, 15.0);
    FragTree b = grow_tree(rates3(), fl, Variant::Ttilde, 1.0, stop, 100000, r2, opt, 15.0);
    REQUIRE(a.particles.size() == b.particles.size());
    REQUIRE(a.events.size() == b.events.size());
    for (size_t i = 0; i < a.events.size(); ++i) {
        CHECK(a.events[i].time == b.events[i].time);
        CHECK(a.events[i].size == b.events[i].size);
        CHECK(a.events[i].post == b.events[i].post);
    }
    for (size_t i = 0; i < a.line_labels.size(); ++i) {
        REQUIRE(a.line_labels[i].size() == b.line_labels[i].size());
        for (size_t j = 0; j < a.line_labels[i].size(); ++j)
            CHECK(a.line_labels[i][j].mass == b.line_labels[i][j].mass);
    }
}

TEST_CASE("grow_tree: argument validation") {
    BranchPolicy fl{BranchPolicy::Kind::follow_largest, 0.0};
    StopRule stop;
    stop.kind = StopRule::Kind::mass_floor;
    stop.floor = 2.0; // not below root mass
    Rng rng(1);
    CHECK_THROWS_AS(grow_tree(rates3(), fl, Variant::Ttilde, 1.0, stop, 1000, rng),
                    std::domain_error);
    stop.floor = 0.25;
    CHECK_THROWS_AS(grow_tree(rates3(), fl, Variant::Ttilde, 1.0, stop, 0, rng),
                    std::domain_error);
}
