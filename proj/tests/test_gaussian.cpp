#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "qbm/errors.hpp"
#include "qbm/gaussian.hpp"
#include "qbm/grid.hpp"
#include "qbm/model.hpp"

using namespace qbm;

namespace {

// Independent oracle: 2-D Newton on (dVx/dt, dCxp/dt) = 0, with the rhs
// transcribed separately from the implementation.
struct VarRhs {
    double kappa;
    double f1(double v, double c) const {
        const double k2 = kappa * kappa;
        return c - v * (4.0 * k2 * v - 1.0) + (1.0 - k2 * c * c) / (16.0 * k2);
    }
    double f2(double v, double c) const {
        const double k2 = kappa * kappa;
        return (1.0 + k2 * c * c) / (16.0 * k2) * (8.0 - c) / v - 4.0 * k2 * c * v;
    }
};

void newton_fixed_point(double kappa, double& v, double& c) {
    VarRhs rhs{kappa};
    for (int it = 0; it < 200; ++it) {
        const double h = 1e-7 * std::max(std::abs(v), 1e-8);
        const double hc = 1e-7 * std::max(std::abs(c), 1e-8);
        const double f1 = rhs.f1(v, c);
        const double f2 = rhs.f2(v, c);
        const double j11 = (rhs.f1(v + h, c) - rhs.f1(v - h, c)) / (2 * h);
        const double j12 = (rhs.f1(v, c + hc) - rhs.f1(v, c - hc)) / (2 * hc);
        const double j21 = (rhs.f2(v + h, c) - rhs.f2(v - h, c)) / (2 * h);
        const double j22 = (rhs.f2(v, c + hc) - rhs.f2(v, c - hc)) / (2 * hc);
        const double det = j11 * j22 - j12 * j21;
        const double dv = (f1 * j22 - f2 * j12) / det;
        const double dc = (j11 * f2 - j21 * f1) / det;
        v -= dv;
        c -= dc;
        if (std::abs(dv) < 1e-15 * v && std::abs(dc) < 1e-15 * std::abs(c))
            break;
    }
}

} // namespace

TEST_CASE("fixed point closed forms at kappa = 1 and 100") {
    const auto ps1 = pointer_fixed_point(1.0);
    CHECK(ps1.var_x == doctest::Approx(0.527553679271713).epsilon(1e-12));
    CHECK(ps1.cov_xp == doctest::Approx(0.541526009999924).epsilon(1e-12));
    CHECK(ps1.var_p == doctest::Approx(0.612852525875551).epsilon(1e-12));

    const auto ps100 = pointer_fixed_point(100.0);
    CHECK(ps100.var_x == doctest::Approx(5.0003086025619e-4).epsilon(1e-12));
    CHECK(ps100.cov_xp == doctest::Approx(9.50059491957475e-3).epsilon(1e-12));
    CHECK(ps100.var_p == doctest::Approx(0.095124780762716).epsilon(1e-12));
}

TEST_CASE("fixed point agrees with the Newton root-finder oracle") {
    for (double kappa : {1.0, 7.3, 100.0}) {
        const auto ps = pointer_fixed_point(kappa);
        double v = ps.var_x * 1.3;
        double c = ps.cov_xp * 0.7;
        newton_fixed_point(kappa, v, c);
        CHECK(v == doctest::Approx(ps.var_x).epsilon(1e-10));
        CHECK(c == doctest::Approx(ps.cov_xp).epsilon(1e-10));
    }
}

TEST_CASE("fixed point zeroes the variance flow across a kappa sweep") {
    for (double lk = -1.0; lk <= 4.01; lk += 0.5) {
        const double kappa = std::pow(10.0, lk);
        const auto ps = pointer_fixed_point(kappa);
        Moments m{0.0, 0.0, ps.var_x, ps.var_p, ps.cov_xp};
        const Moments d = moment_ode_rhs(m, kappa);
        // Relative to the stiffest term in each equation.
        const double s1 = 4.0 * kappa * kappa * ps.var_x * ps.var_x;
        const double s2 = 4.0 * kappa * kappa * ps.cov_xp * ps.var_x;
        CHECK(std::abs(d.var_x) / s1 < 1e-9);
        CHECK(std::abs(d.cov_xp) / s2 < 1e-9);
    }
}

TEST_CASE("semiclassical scaling of the pointer widths") {
    const auto ps = pointer_fixed_point(1e6);
    CHECK(ps.var_x * 2.0 * std::pow(1e6, 1.5) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(ps.var_p * std::pow(1e6, 0.5) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(ps.cov_xp * 1e6 == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("asymptotic crossover is continuous at kappa = 1e6") {
    const auto below = pointer_fixed_point(1e6);               // exact branch
    const auto above = pointer_fixed_point(1e6 * (1 + 1e-12)); // asymptotic branch
    CHECK(std::abs(above.var_x - below.var_x) / below.var_x < 1e-9);
    CHECK(std::abs(above.var_p - below.var_p) / below.var_p < 1e-9);
    CHECK(std::abs(above.cov_xp - below.cov_xp) / below.cov_xp < 1e-9);
}

TEST_CASE("log-log slopes of the pointer widths over [1e2, 1e4]") {
    std::vector<double> lk, lvx, lvp, lc;
    for (int i = 0; i < 21; ++i) {
        const double kappa = 1e2 * std::pow(1e2, i / 20.0);
        const auto ps = pointer_fixed_point(kappa);
        lk.push_back(std::log(kappa));
        lvx.push_back(std::log(ps.var_x));
        lvp.push_back(std::log(ps.var_p));
        lc.push_back(std::log(ps.cov_xp));
    }
    auto slope = [&](const std::vector<double>& y) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < lk.size(); ++i) {
            mx += lk[i];
            my += y[i];
        }
        mx /= lk.size();
        my /= lk.size();
        double num = 0, den = 0;
        for (std::size_t i = 0; i < lk.size(); ++i) {
            num += (lk[i] - mx) * (y[i] - my);
            den += (lk[i] - mx) * (lk[i] - mx);
        }
        return num / den;
    };
    CHECK(std::abs(slope(lvx) + 1.5) < 0.02);
    CHECK(std::abs(slope(lvp) + 0.5) < 0.02);
    CHECK(std::abs(slope(lc) + 1.0) < 0.02);
}

TEST_CASE("moment ODE right-hand side") {
    SUBCASE("means decouple from the variances") {
        Moments m{3.0, 2.0, 0.9, 0.0, 0.1};
        m.var_p = (1.0 + m.cov_xp * m.cov_xp) / (4.0 * m.var_x);
        const Moments d = moment_ode_rhs(m, 1.0);
        CHECK(d.mean_x == doctest::Approx(2.0));
        CHECK(d.mean_p == doctest::Approx(-2.0));
    }
    SUBCASE("hand-evaluated variance flow at kappa=1, Vx=1, Cxp=0") {
        Moments m{0.0, 0.0, 1.0, 0.25, 0.0};
        const Moments d = moment_ode_rhs(m, 1.0);
        CHECK(d.var_x == doctest::Approx(-2.9375).epsilon(1e-14));
    }
    SUBCASE("non-positive Vx is a domain error") {
        Moments m{0.0, 0.0, -1.0, 1.0, 0.0};
        CHECK_THROWS_AS(moment_ode_rhs(m, 1.0), DomainError);
    }
}

TEST_CASE("integrate_moments") {
    const double kappa = 1.0;
    const auto ps = pointer_fixed_point(kappa);

    SUBCASE("fixed point is stationary over t = 10") {
        Moments m0{0.0, 0.0, ps.var_x, ps.var_p, ps.cov_xp};
        const auto traj = integrate_moments(m0, kappa, 10.0, 1e-3, 100);
        for (const auto& [t, m] : traj) {
            CHECK(std::abs(m.var_x - ps.var_x) < 1e-8);
            CHECK(std::abs(m.cov_xp - ps.cov_xp) < 1e-8);
        }
    }
    SUBCASE("means follow the damped drift analytically") {
        Moments m0{0.0, 1.0, ps.var_x, ps.var_p, ps.cov_xp};
        const auto traj = integrate_moments(m0, kappa, 2.0, 1e-3, 50);
        for (const auto& [t, m] : traj) {
            CHECK(m.mean_p == doctest::Approx(std::exp(-t)).epsilon(1e-9));
            CHECK(m.mean_x == doctest::Approx(1.0 - std::exp(-t)).epsilon(1e-9));
        }
    }
    SUBCASE("perturbed variances relax to the fixed point at kappa = 50") {
        const auto ps50 = pointer_fixed_point(50.0);
        Moments m0{0.0, 0.0, 2.0 * ps50.var_x, 0.0, ps50.cov_xp};
        m0.var_p = (1.0 / 2500.0 + m0.cov_xp * m0.cov_xp) / (4.0 * m0.var_x);
        const auto traj = integrate_moments(m0, 50.0, 10.0, 1e-4, 1000);
        const Moments fin = traj.back().second;
        CHECK(std::abs(fin.var_x - ps50.var_x) < 1e-6 * ps50.var_x);
    }
    SUBCASE("variance identity holds along the trajectory") {
        Moments m0{0.0, 0.0, 1.7 * ps.var_x, 0.0, 0.3};
        m0.var_p = (1.0 + 0.09) / (4.0 * m0.var_x);
        const auto traj = integrate_moments(m0, kappa, 10.0, 1e-3, 100);
        for (const auto& [t, m] : traj)
            CHECK(std::abs(heisenberg_defect(m, kappa)) < 1e-8);
    }
    SUBCASE("a step driving Vx negative is rejected with a diagnostic") {
        Moments m0{0.0, 0.0, 1e-4, 0.0, 0.0};
        m0.var_p = 1.0 / (4.0 * 100.0 * m0.var_x);
        CHECK_THROWS_AS(integrate_moments(m0, 10.0, 10.0, 0.5), StepSizeError);
    }
}

TEST_CASE("stability eigenvalues") {
    for (double kappa : {0.1, 1.0, 50.0, 1e4}) {
        const auto eig = stability_eigenvalues(kappa);
        CHECK(eig[0].real() < 0.0);
        CHECK(eig[1].real() < 0.0);
        // Real 2x2 Jacobian: either both real or a conjugate pair.
        if (eig[0].imag() != 0.0) {
            CHECK(eig[0].real() == doctest::Approx(eig[1].real()));
            CHECK(eig[0].imag() == doctest::Approx(-eig[1].imag()));
        }
    }
    // Cross-check trace/determinant against a finite-difference Jacobian.
    const double kappa = 1.0;
    const auto ps = pointer_fixed_point(kappa);
    VarRhs rhs{kappa};
    const double h = 1e-6;
    const double j11 = (rhs.f1(ps.var_x + h, ps.cov_xp) - rhs.f1(ps.var_x - h, ps.cov_xp)) / (2 * h);
    const double j12 = (rhs.f1(ps.var_x, ps.cov_xp + h) - rhs.f1(ps.var_x, ps.cov_xp - h)) / (2 * h);
    const double j21 = (rhs.f2(ps.var_x + h, ps.cov_xp) - rhs.f2(ps.var_x - h, ps.cov_xp)) / (2 * h);
    const double j22 = (rhs.f2(ps.var_x, ps.cov_xp + h) - rhs.f2(ps.var_x, ps.cov_xp - h)) / (2 * h);
    const auto eig = stability_eigenvalues(kappa);
    CHECK(eig[0].real() + eig[1].real() == doctest::Approx(j11 + j22).epsilon(1e-6));
    CHECK((eig[0] * eig[1]).real() ==
          doctest::Approx(j11 * j22 - j12 * j21).epsilon(1e-6));
}

TEST_CASE("pointer_wavefunction reproduces its spec on the grid") {
    const double kappa = 1.0;
    const auto ps = pointer_fixed_point(kappa);
    const Grid grid = Grid::pointer_default(kappa, 1024, 24.0);
    SpectralWorkspace ws(grid.n);

    SUBCASE("variances and covariance at rest") {
        const auto st = pointer_wavefunction(ps, 0.0, 0.0, grid);
        const auto m = measure_moments(st, ws).moments;
        CHECK(m.var_x == doctest::Approx(ps.var_x).epsilon(1e-6));
        CHECK(m.var_p == doctest::Approx(ps.var_p).epsilon(1e-6));
        CHECK(std::abs(m.cov_xp - ps.cov_xp) < 1e-6);
    }
    SUBCASE("momentum boost through the phase factor") {
        const auto st = pointer_wavefunction(ps, 0.0, 2.0, grid);
        const auto m = measure_moments(st, ws).moments;
        CHECK(std::abs(m.mean_p - 2.0) < 1e-6);
        CHECK(std::abs(m.mean_x) < 1e-9);
    }
    SUBCASE("under-resolved grid is rejected") {
        const Grid coarse = Grid::pointer_default(kappa, 128, 24.0);
        CHECK_THROWS_AS(pointer_wavefunction(ps, 0.0, 0.0, coarse), ResolutionError);
    }
}
