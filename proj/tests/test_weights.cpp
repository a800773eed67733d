#include <doctest.h>

#include <cmath>
#include <vector>

#include "qbm/engine.hpp"
#include "qbm/errors.hpp"
#include "qbm/gaussian.hpp"
#include "qbm/grid.hpp"
#include "qbm/rng.hpp"
#include "qbm/weights.hpp"

using namespace qbm;

namespace {

PacketEnsemble two_pointer_packets(double kappa, double w1, double dx, double dp) {
    const auto ps = pointer_fixed_point(kappa);
    PacketEnsemble ens;
    ens.packets = {{-0.5 * dx, -0.5 * dp, ps.var_x, ps.var_p, ps.cov_xp},
                   {+0.5 * dx, +0.5 * dp, ps.var_x, ps.var_p, ps.cov_xp}};
    ens.weights = {w1, 1.0 - w1};
    return ens;
}

} // namespace

TEST_CASE("composite moments") {
    const double kappa = 1.0;
    const auto ps = pointer_fixed_point(kappa);

    SUBCASE("single packet is the identity") {
        PacketEnsemble ens;
        ens.packets = {{0.3, -0.2, ps.var_x, ps.var_p, ps.cov_xp}};
        ens.weights = {1.0};
        const Moments m = composite_moments(ens);
        CHECK(m.mean_x == doctest::Approx(0.3));
        CHECK(m.var_x == doctest::Approx(ps.var_x));
        CHECK(m.cov_xp == doctest::Approx(ps.cov_xp));
    }
    SUBCASE("two equal packets at -+1 add 1 to Vx") {
        const auto ens = two_pointer_packets(kappa, 0.5, 2.0, 0.0);
        const Moments m = composite_moments(ens);
        CHECK(m.var_x == doctest::Approx(ps.var_x + 1.0).epsilon(1e-12));
        CHECK(m.mean_x == doctest::Approx(0.0));
    }
    SUBCASE("covariance cross term for x=-+1, p=-+1 is +2") {
        const auto ens = two_pointer_packets(kappa, 0.5, 2.0, 2.0);
        const Moments m = composite_moments(ens);
        // Pairwise sum over ordered pairs: 2 w1 w2 dx dp = 2.
        CHECK(m.cov_xp - ps.cov_xp == doctest::Approx(2.0).epsilon(1e-12));
    }
}

TEST_CASE("weight flow") {
    const double kappa = 1.0;

    SUBCASE("single packet does not flow") {
        const auto ps = pointer_fixed_point(kappa);
        PacketEnsemble ens;
        ens.packets = {{1.0, 0.5, ps.var_x, ps.var_p, ps.cov_xp}};
        ens.weights = {1.0};
        CHECK(weight_flow(ens, kappa)[0] == doctest::Approx(0.0));
    }
    SUBCASE("the symmetric two-packet point is stationary") {
        const auto ens = two_pointer_packets(kappa, 0.5, 3.0, 0.0);
        const auto d = weight_flow(ens, kappa);
        CHECK(std::abs(d[0]) < 1e-12);
        CHECK(std::abs(d[1]) < 1e-12);
    }
    SUBCASE("hand-evaluated two-packet flow: w1=0.6, dx=2") {
        const auto ens = two_pointer_packets(kappa, 0.6, 2.0, 0.0);
        const auto d = weight_flow(ens, kappa);
        // (2 w1 - 1) w1 w2 (2 k^2 dx^2) = 0.2 * 0.6 * 0.4 * 8 = 0.384.
        CHECK(d[0] == doctest::Approx(0.384).epsilon(1e-12));
        CHECK(d[0] + d[1] == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("flow sums to zero for many asymmetric packets") {
        const auto ps = pointer_fixed_point(kappa);
        PacketEnsemble ens;
        ens.packets = {{-2.0, 0.1, ps.var_x, ps.var_p, ps.cov_xp},
                       {0.5, -0.4, 2.0 * ps.var_x, 0.5 * ps.var_p, ps.cov_xp},
                       {3.0, 0.7, ps.var_x, ps.var_p, 0.0}};
        ens.weights = {0.2, 0.5, 0.3};
        const auto d = weight_flow(ens, kappa);
        CHECK(std::abs(d[0] + d[1] + d[2]) < 1e-12);
    }
}

TEST_CASE("jump reshuffle") {
    const double kappa = 1.0;

    SUBCASE("single packet keeps weight one") {
        const auto ps = pointer_fixed_point(kappa);
        PacketEnsemble ens;
        ens.packets = {{0.0, 0.0, ps.var_x, ps.var_p, ps.cov_xp}};
        ens.weights = {1.0};
        CHECK(jump_reshuffle(ens, kappa).weights[0] == doctest::Approx(1.0));
    }
    SUBCASE("symmetric configuration is preserved") {
        const auto ens = two_pointer_packets(kappa, 0.5, 3.0, 0.0);
        const auto out = jump_reshuffle(ens, kappa);
        CHECK(out.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("asymmetric reshuffle cross-checked against the grid jump") {
        const double kg = 50.0;
        const auto ps = pointer_fixed_point(kg);
        const double a = 0.5; // packet offsets -+0.5 (13 sigma_x apart)
        PacketEnsemble ens;
        ens.packets = {{-a, 0.0, ps.var_x, ps.var_p, ps.cov_xp},
                       {+a, 0.0, ps.var_x, ps.var_p, ps.cov_xp}};
        ens.weights = {0.3, 0.7};
        const auto out = jump_reshuffle(ens, kg);

        const Grid g = Grid::spanning(kg, 0.0, 1.0, 1024);
        std::vector<PacketInit> packets = {{0.3, -a, 0.0, ps.var_x, ps.cov_xp},
                                           {0.7, +a, 0.0, ps.var_x, ps.cov_xp}};
        GridState psi = superposition_state(g, packets);
        NlpseEngine eng(g.n, kg);
        eng.apply_jump(psi);
        // Weight of packet j after the jump = mass on its half-line.
        double left = 0.0;
        for (int i = 0; i < g.n; ++i)
            if (g.x(i) < 0.0)
                left += std::norm(psi.amp[i]) * g.dx();
        CHECK(out.weights[0] == doctest::Approx(left).epsilon(2e-3));
        CHECK(out.weights[0] + out.weights[1] == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("non-positive composite rate is rejected") {
        // Single squeezed packet with 2 k^2 Vx = Vp/8 = 1/4 -> r = 0.
        PacketEnsemble ens;
        ens.packets = {{0.0, 0.0, 0.125, 2.0, 0.0}};
        ens.weights = {1.0};
        CHECK_THROWS_AS(jump_reshuffle(ens, 1.0), DomainError);
    }
}

TEST_CASE("single-step martingale cancellation") {
    const double kappa = 3.0;
    const auto ens = two_pointer_packets(kappa, 0.35, 1.5, 0.2);
    const Moments c = composite_moments(ens);
    const double r = 2.0 * kappa * kappa * c.var_x + c.var_p / 8.0 - 0.5;
    for (std::size_t j = 0; j < ens.size(); ++j) {
        const double rj = packet_jump_norm(ens, c, j, kappa);
        const double drift = ens.weights[j] * (r - rj);
        const double jump_expect = r * ens.weights[j] * (rj / r - 1.0);
        CHECK(std::abs(drift + jump_expect) < 1e-12);
    }
}

TEST_CASE("weight process") {
    const double kappa = 5.0;

    SUBCASE("degenerate initial weight is already absorbed") {
        auto ens = two_pointer_packets(kappa, 1.0, 2.0, 0.0);
        const auto res = run_weight_process(ens, kappa, 1.0, 9);
        CHECK(res.survivor == 0);
        CHECK(res.absorption_time == doctest::Approx(0.0));
    }
    SUBCASE("every run absorbs and weights stay on the simplex") {
        const auto ens = two_pointer_packets(kappa, 0.4, 1.0, 0.0);
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            const auto res = run_weight_process(ens, kappa, 50.0, seed);
            CHECK(res.survivor >= 0);
            for (const auto& row : res.weights) {
                double sum = 0.0;
                for (double w : row) {
                    CHECK(w >= 0.0);
                    CHECK(w <= 1.0 + 1e-12);
                    sum += w;
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            }
        }
    }
    SUBCASE("survivor frequencies follow the initial weights") {
        const auto ens = two_pointer_packets(kappa, 0.3, 1.0, 0.0);
        int second = 0;
        const int runs = 2000;
        for (int r = 0; r < runs; ++r) {
            const auto res = run_weight_process(ens, kappa, 50.0, split_seed(77, r));
            REQUIRE(res.survivor >= 0);
            if (res.survivor == 1)
                ++second;
        }
        const double freq = static_cast<double>(second) / runs;
        const double sem = std::sqrt(0.3 * 0.7 / runs);
        MESSAGE("survivor-2 frequency ", freq);
        CHECK(std::abs(freq - 0.7) < 3.0 * sem);
    }
    SUBCASE("ensemble mean weight is conserved mid-flight") {
        const auto ens = two_pointer_packets(kappa, 0.3, 1.0, 0.0);
        // Sample w_1 at a fixed early time across runs; E[w] must stay 0.3.
        const double t_probe = 0.02;
        double mean = 0.0;
        int n_alive = 0;
        const int runs = 3000;
        for (int r = 0; r < runs; ++r) {
            WeightProcessOptions opt;
            opt.record_stride = 5;
            const auto res = run_weight_process(ens, kappa, t_probe, split_seed(123, r), opt);
            mean += res.weights.back()[0];
            ++n_alive;
        }
        mean /= n_alive;
        // sd of w at this depth is below 0.5; 3 sigma / sqrt(N) band.
        CHECK(std::abs(mean - 0.3) < 3.0 * 0.5 / std::sqrt(static_cast<double>(runs)));
    }
}

TEST_CASE("ensemble validation") {
    const double kappa = 5.0;
    SUBCASE("weights must sum to one") {
        auto ens = two_pointer_packets(kappa, 0.3, 1.0, 0.0);
        ens.weights = {0.3, 0.6};
        CHECK_THROWS_AS(ens.validate(kappa, 0.0), DomainError);
    }
    SUBCASE("co-located packets fail the separation certificate") {
        auto ens = two_pointer_packets(kappa, 0.5, 1e-4, 0.0);
        CHECK_THROWS_AS(ens.validate(kappa, default_separation_threshold(kappa)),
                        DomainError);
        CHECK_THROWS_AS(run_weight_process(ens, kappa, 1.0, 1), DomainError);
    }
    SUBCASE("certificate value") {
        const auto ens = two_pointer_packets(kappa, 0.5, 2.0, 1.0);
        CHECK(separation_certificate(ens, kappa) ==
              doctest::Approx(2.0 * 25.0 * 4.0 + 1.0 / 8.0));
    }
}
