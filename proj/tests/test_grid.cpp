#include <doctest.h>

#include <cmath>
#include <vector>

#include "qbm/errors.hpp"
#include "qbm/gaussian.hpp"
#include "qbm/grid.hpp"

using namespace qbm;

TEST_CASE("grid construction and momentum dual") {
    const Grid g = Grid::spanning(2.0, 0.0, 5.0, 256);
    CHECK(g.dx() == doctest::Approx(10.0 / 256));
    CHECK(g.dp() == doctest::Approx(2.0 * M_PI / (2.0 * 10.0)));
    CHECK(g.p(0) == 0.0);
    CHECK(g.p(1) == doctest::Approx(g.dp()));
    CHECK(g.p(255) == doctest::Approx(-g.dp()));
    CHECK_THROWS_AS(Grid::spanning(1.0, 0.0, 1.0, 1000), DomainError);
}

TEST_CASE("Parseval: position and momentum norms agree") {
    const Grid g = Grid::spanning(1.0, 0.0, 8.0, 512);
    SpectralWorkspace ws(g.n);
    const auto st = gaussian_state(g, 0.7, -0.4, 0.5, 0.2);
    CHECK(std::abs(st.norm2() - 1.0) < 1e-12);
    CHECK(std::abs(momentum_norm2(st, ws) - st.norm2()) < 1e-12);
}

TEST_CASE("measured moments of an analytic Gaussian") {
    const double kappa = 1.5;
    const Grid g = Grid::spanning(kappa, 0.0, 9.0, 1024);
    SpectralWorkspace ws(g.n);
    const double vx = 0.31, c = 0.22, x0 = 1.2, p0 = -0.7;
    const double vp = (1.0 / (kappa * kappa) + c * c) / (4.0 * vx);
    const auto st = gaussian_state(g, x0, p0, vx, c);
    const auto m = measure_moments(st, ws).moments;
    CHECK(m.mean_x == doctest::Approx(x0).epsilon(1e-9));
    CHECK(m.mean_p == doctest::Approx(p0).epsilon(1e-9));
    CHECK(m.var_x == doctest::Approx(vx).epsilon(1e-9));
    CHECK(m.var_p == doctest::Approx(vp).epsilon(1e-9));
    CHECK(m.cov_xp == doctest::Approx(c).epsilon(1e-9));
}

TEST_CASE("momentum translation covariance") {
    const Grid g = Grid::spanning(1.0, 0.0, 8.0, 512);
    SpectralWorkspace ws(g.n);
    const auto a = measure_moments(gaussian_state(g, 0.0, 0.3, 0.5, 0.0), ws).moments;
    const auto b = measure_moments(gaussian_state(g, 0.0, 1.8, 0.5, 0.0), ws).moments;
    CHECK(b.mean_p - a.mean_p == doctest::Approx(1.5).epsilon(1e-10));
    CHECK(b.var_p == doctest::Approx(a.var_p).epsilon(1e-9));
}

TEST_CASE("superposition moment decomposition against the grid") {
    const double kappa = 8.0;
    const Grid g = Grid::spanning(kappa, 0.0, 4.0, 1024);
    SpectralWorkspace ws(g.n);
    const auto ps = pointer_fixed_point(kappa);

    SUBCASE("equal-weight packets at x = -a, +a add a^2 to Vx") {
        const double a = 1.0;
        std::vector<PacketInit> packets = {
            {0.5, -a, 0.0, ps.var_x, ps.cov_xp},
            {0.5, +a, 0.0, ps.var_x, ps.cov_xp},
        };
        const auto st = superposition_state(g, packets);
        const auto m = measure_moments(st, ws).moments;
        CHECK(m.var_x == doctest::Approx(ps.var_x + a * a).epsilon(1e-6));
        CHECK(std::abs(m.mean_x) < 1e-9);
    }
    SUBCASE("covariance cross term is twice the weighted pair covariance") {
        // Packets at (x, p) = (-1, -0.5) and (+1, +0.5): the composite
        // covariance picks up sum_{jk} w_j w_k dx dp = 2 w1 w2 (2)(1) = 1
        // on top of the packet average.
        std::vector<PacketInit> packets = {
            {0.5, -1.0, -0.5, ps.var_x, ps.cov_xp},
            {0.5, +1.0, +0.5, ps.var_x, ps.cov_xp},
        };
        const auto st = superposition_state(g, packets);
        const auto m = measure_moments(st, ws).moments;
        CHECK(m.cov_xp - ps.cov_xp == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("edge leakage monitor") {
    const Grid wide = Grid::spanning(1.0, 0.0, 10.0, 512);
    SpectralWorkspace ws_wide(wide.n);
    CHECK_FALSE(measure_moments(gaussian_state(wide, 0.0, 0.0, 0.5, 0.0), ws_wide).tainted);

    // Narrow window: tails reach the boundary and the reading is tainted.
    const Grid narrow = Grid::spanning(1.0, 0.0, 3.0, 128);
    SpectralWorkspace ws_narrow(narrow.n);
    const auto st = gaussian_state(narrow, 0.0, 0.0, 0.5, 0.0);
    CHECK(st.edge_leakage());
    CHECK(measure_moments(st, ws_narrow).tainted);
}

TEST_CASE("gaussian_state rejects unresolvable packets") {
    const Grid g = Grid::spanning(1.0, 0.0, 2.0, 64);
    CHECK_THROWS_AS(gaussian_state(g, 0.0, 0.0, 4.0, 0.0), ResolutionError);  // window
    CHECK_THROWS_AS(gaussian_state(g, 0.0, 100.0, 0.25, 0.0), ResolutionError); // band
    CHECK_THROWS_AS(gaussian_state(g, 0.0, 0.0, -1.0, 0.0), DomainError);
}

TEST_CASE("renormalize and edge ratio") {
    const Grid g = Grid::spanning(1.0, 0.0, 8.0, 256);
    auto st = gaussian_state(g, 0.0, 0.0, 0.5, 0.0);
    for (auto& a : st.amp)
        a *= 3.0;
    CHECK(st.norm() == doctest::Approx(3.0).epsilon(1e-12));
    st.renormalize();
    CHECK(st.norm() == doctest::Approx(1.0).epsilon(1e-12));
}
