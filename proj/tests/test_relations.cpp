#include <catch2/catch_amalgamated.hpp>

#include "fragexplore/relations.hpp"

using namespace fragx;

TEST_CASE("derived constants at kappa=3") {
    auto r = derive_relations(3.0);
    CHECK(r.gamma == Catch::Approx(1.7320508).epsilon(1e-7));
    CHECK(r.kappa_prime == Catch::Approx(16.0 / 3.0));
    CHECK(r.alpha == Catch::Approx(4.0 / 3.0));
    CHECK(r.u == Catch::Approx(0.5).margin(1e-12));
    CHECK(r.malthus_delta == Catch::Approx(11.0 / 6.0));
}

TEST_CASE("derived constants at kappa=3.2") {
    auto r = derive_relations(3.2);
    CHECK(r.alpha == Catch::Approx(1.25));
    CHECK(r.kappa_prime == Catch::Approx(5.0));
    CHECK(r.u == Catch::Approx(0.7071068).epsilon(1e-6));
}

TEST_CASE("open domain enforced") {
    CHECK_THROWS_AS(derive_relations(4.0), std::domain_error);
    CHECK_THROWS_AS(derive_relations(8.0 / 3.0), std::domain_error);
    CHECK_THROWS_AS(derive_relations(5.0), std::domain_error);
}

TEST_CASE("beta <-> rho' endpoints") {
    auto r3 = derive_relations(3.0);
    CHECK(rho_prime_from_beta(1.0, r3) == 0.0);
    CHECK(rho_prime_from_beta(-1.0, r3) == Catch::Approx(-2.0 / 3.0).margin(1e-12));
    auto r32 = derive_relations(3.2);
    CHECK(rho_prime_from_beta(0.0, r32) == Catch::Approx(-0.5).margin(1e-10));
    CHECK(beta_from_rho_prime(0.0, r3) == 1.0);
    CHECK(beta_from_rho_prime(-2.0 / 3.0, r3) == -1.0);
    CHECK(beta_from_rho_prime((r3.kappa_prime - 6.0) / 2.0, r3) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("round trip and monotonicity on a grid") {
    for (double kappa : {2.7, 3.0, 3.5, 3.99}) {
        auto rel = derive_relations(kappa);
        double prev = rel.kappa_prime - 6.0 - 1e-9;
        for (int i = 0; i <= 200; ++i) {
            const double beta = -1.0 + 2.0 * i / 200.0;
            const double rp = rho_prime_from_beta(beta, rel);
            REQUIRE(rp > prev);
            prev = rp;
            CHECK(beta_from_rho_prime(rp, rel) == Catch::Approx(beta).margin(1e-9));
        }
    }
}

TEST_CASE("ladder quantities: frozen points at kappa=3") {
    auto rel = derive_relations(3.0);
    auto q0 = ladder_quantities(0.0, rel);
    CHECK(q0.P_L == Catch::Approx(0.25).margin(1e-12));
    CHECK(q0.u_L == Catch::Approx(0.0).margin(1e-12));
    CHECK(q0.u_R == Catch::Approx(1.0).margin(1e-12));
    auto qs = ladder_quantities(-1.0 / 3.0, rel); // symmetric beta=0 point
    CHECK(qs.u_L == Catch::Approx(0.5).margin(1e-10));
    CHECK(qs.u_R == Catch::Approx(0.5).margin(1e-10));
}

TEST_CASE("mean-ratio and ratio-consistency identities") {
    for (double kappa : {2.7, 3.0, 3.5, 3.99}) {
        auto rel = derive_relations(kappa);
        for (int i = 0; i <= 200; ++i) {
            const double beta = -1.0 + 2.0 * i / 200.0;
            const double rp = rho_prime_from_beta(beta, rel);
            auto q = ladder_quantities(rp, rel);
            REQUIRE(std::fabs((q.u_L + q.u_R) / 2.0 - rel.u) < 1e-9);
            if (i > 0 && i < 200)
                REQUIRE(std::fabs(q.u_L / q.u_R - (1.0 - beta) / (1.0 + beta)) < 1e-9);
        }
    }
}

TEST_CASE("intensity splits: frozen examples") {
    auto r3 = derive_relations(3.0);
    auto s1 = intensity_split(1.0, 1.0, r3);
    CHECK(s1.a_rm == 1.0);
    CHECK(s1.a_lp == Catch::Approx(0.0).margin(1e-14));
    CHECK(s1.a_rp == Catch::Approx(1.0).margin(1e-12));
    auto s0 = intensity_split(0.0, 1.0, r3);
    // a_plus = -2*cos(4pi/3) = 1, split evenly
    CHECK(s0.a_plus == Catch::Approx(1.0).margin(1e-12));
    CHECK(s0.a_lp == Catch::Approx(0.5).margin(1e-12));
    CHECK(s0.a_rp == Catch::Approx(0.5).margin(1e-12));
    auto sm = intensity_split(-1.0, 2.0, derive_relations(3.2));
    CHECK(sm.a_lp == Catch::Approx(2.8284271).epsilon(1e-6));
    CHECK(sm.a_rp == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("wedge dimensions and duality") {
    auto r3 = derive_relations(3.0);
    CHECK(wedge_bessel_dimension(r3.kappa / 2.0, r3) == Catch::Approx(2.0));
    CHECK(wedge_bessel_dimension(2.0, r3) == Catch::Approx(7.0 / 3.0));
    CHECK(wedge_is_thick(2.0, r3));
    CHECK(wedge_bessel_dimension(r3.kappa - 2.0, r3) == Catch::Approx(5.0 / 3.0));
    CHECK_FALSE(wedge_is_thick(r3.kappa - 2.0, r3));
    for (double kappa : {2.7, 3.0, 3.5, 3.99}) {
        auto rel = derive_relations(kappa);
        for (double W : {0.3, 1.0, 2.0}) {
            const double dual = rel.kappa - W; // gamma^2 = kappa
            REQUIRE(std::fabs(wedge_bessel_dimension(W, rel) +
                              wedge_bessel_dimension(dual, rel) - 4.0) < 1e-12);
        }
    }
    CHECK_THROWS_AS(wedge_bessel_dimension(0.0, r3), std::domain_error);
}
