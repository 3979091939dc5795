#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "sselab/types.hpp"

using namespace sselab;

TEST_CASE("params: accepted values pass through unchanged") {
    const PhysParams p = PhysParams::validated(2.5, 0.75, 0.0);
    CHECK(p.mass == 2.5);
    CHECK(p.gamma == 0.75);
    CHECK(p.gamma_prime == 0.0);
    CHECK(PhysParams::validated(1.0, 1.0, 0.0).gamma_prime == 0.0);
    CHECK(PhysParams::validated(1e-8, 1e-8, 1e12).mass == 1e-8);
}

TEST_CASE("params: each violation maps to its own error type") {
    CHECK_THROWS_AS(PhysParams::validated(-1.0, 1.0, 1.0), NonPositiveMass);
    CHECK_THROWS_AS(PhysParams::validated(0.0, 1.0, 1.0), NonPositiveMass);
    CHECK_THROWS_AS(PhysParams::validated(1.0, 0.0, 1.0), NonPositiveGamma);
    CHECK_THROWS_AS(PhysParams::validated(1.0, -2.0, 0.0), NonPositiveGamma);
    CHECK_THROWS_AS(PhysParams::validated(1.0, 1.0, -1e-12), NegativeGammaPrime);

    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(PhysParams::validated(nan, 1.0, 1.0), NonFiniteInput);
    CHECK_THROWS_AS(PhysParams::validated(1.0, inf, 1.0), NonFiniteInput);
    CHECK_THROWS_AS(PhysParams::validated(1.0, 1.0, -inf), NonFiniteInput);

    // every typed error is catchable as InvalidParams
    CHECK_THROWS_AS(PhysParams::validated(-1.0, 1.0, 1.0), InvalidParams);
    CHECK_THROWS_AS(PhysParams::validated(1.0, 0.0, 1.0), InvalidParams);
    CHECK_THROWS_AS(PhysParams::validated(nan, 1.0, 1.0), InvalidParams);
}

TEST_CASE("params: validation is total over finite doubles") {
    const std::vector<double> probe = {
        -1e308, -1.0, -1e-308, -0.0, 0.0,
        std::numeric_limits<double>::denorm_min(), 1e-308, 1.0, 1e308};
    for (double m : probe)
        for (double g : probe)
            for (double gp : probe) {
                try {
                    (void)PhysParams::validated(m, g, gp);
                    CHECK(m > 0.0);
                    CHECK(g > 0.0);
                    CHECK(gp >= 0.0);
                } catch (const InvalidParams&) {
                    CHECK((m <= 0.0 || g <= 0.0 || gp < 0.0));
                }
            }
}

TEST_CASE("purity defect vanishes exactly on the pure-Gaussian surface") {
    // var_p chosen so 4 var_q var_p = 1 + 4 covar^2 holds in exact arithmetic
    const std::vector<double> vqs = {0.25, 0.5, 1.0, 2.0};
    const std::vector<double> rs = {0.0, 0.25, 0.5, 1.5};
    for (double vq : vqs)
        for (double r : rs) {
            MomentState s;
            s.var_q = vq;
            s.covar = r;
            s.var_p = (1.0 + 4.0 * r * r) / (4.0 * vq);
            CHECK(std::abs(purity_defect(s)) < 1e-14);
        }

    MomentState mixed{0.0, 0.0, 1.0, 1.0, 0.0};  // var product above the bound
    CHECK(purity_defect(mixed) == doctest::Approx(3.0));
    MomentState below{0.0, 0.0, 0.25, 0.25, 0.0};
    CHECK(purity_defect(below) < 0.0);
}

TEST_CASE("grid spec: power-of-two lattice, finite positive box") {
    CHECK_THROWS_AS(GridSpec::validated(100, 10.0), InvalidParams);
    CHECK_THROWS_AS(GridSpec::validated(192, 10.0), InvalidParams);
    CHECK_THROWS_AS(GridSpec::validated(64, 10.0), InvalidParams);   // below minimum
    CHECK_THROWS_AS(GridSpec::validated(-256, 10.0), InvalidParams);
    CHECK_THROWS_AS(GridSpec::validated(256, 0.0), InvalidParams);
    CHECK_THROWS_AS(GridSpec::validated(256, -5.0), InvalidParams);
    CHECK_THROWS_AS(GridSpec::validated(
                        256, std::numeric_limits<double>::infinity()),
                    InvalidParams);

    const GridSpec g = GridSpec::validated(256, 16.0);
    CHECK(g.dq() == doctest::Approx(0.0625));
    CHECK(g.q(0) == doctest::Approx(-8.0));
    CHECK(g.q(128) == doctest::Approx(0.0));
    CHECK(g.q(255) == doctest::Approx(8.0 - 0.0625));
    CHECK(g.p_max() == doctest::Approx(M_PI * 256 / 16.0));
}
