#include "failcal/design.hpp"

#include <doctest.h>

#include <set>

using namespace failcal;

TEST_SUITE("design") {

TEST_CASE("Latin hypercube puts one point in each stratum") {
    Rng rng(1);
    for (Eigen::Index n : {1, 5, 37}) {
        const Design d = latin_hypercube(n, 3, rng);
        REQUIRE(d.rows() == n);
        REQUIRE(d.cols() == 3);
        for (Eigen::Index c = 0; c < 3; ++c) {
            std::set<long> strata;
            for (Eigen::Index r = 0; r < n; ++r) {
                CHECK(d(r, c) >= 0.0);
                CHECK(d(r, c) < 1.0);
                strata.insert(static_cast<long>(d(r, c) * n));
            }
            CHECK(strata.size() == std::size_t(n));
        }
    }
}

TEST_CASE("maximin selection improves the minimum distance") {
    Rng a(3), b(3);
    const Design one = latin_hypercube(20, 2, a);
    const Design best = maximin_lhs(20, 2, b, 50);
    CHECK(min_distance(best) >= min_distance(one));
    Rng c(3);
    CHECK(maximin_lhs(20, 2, c, 50) == best);
}

TEST_CASE("minimum distance") {
    Design d(3, 2);
    d << 0, 0, 3, 4, 0, 1;
    CHECK(min_distance(d) == 1.0);
    CHECK(std::isinf(min_distance(Design::Zero(1, 2))));
}

TEST_CASE("equispaced grids") {
    const Design g = equispaced_grid(3, 2);
    REQUIRE(g.rows() == 9);
    std::set<std::pair<double, double>> pts;
    for (Eigen::Index r = 0; r < 9; ++r) pts.emplace(g(r, 0), g(r, 1));
    CHECK(pts.size() == 9);
    CHECK(pts.count({0.5, 1.0}) == 1);
    const Design line = equispaced_design(50, 1);
    REQUIRE(line.rows() == 50);
    CHECK(line(0, 0) == 0.0);
    CHECK(line(49, 0) == 1.0);
    CHECK(line(7, 0) == doctest::Approx(7.0 / 49.0));
    CHECK(equispaced_design(200, 2).rows() == 196);
}

}  // TEST_SUITE
