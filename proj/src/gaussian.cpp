#include "qbm/gaussian.hpp"

#include <cmath>
#include <cstdio>

#include "qbm/errors.hpp"
#include "qbm/grid.hpp"

namespace qbm {

namespace {

// Above this the exact closed forms are replaced by their expansions in
// 1/sqrt(kappa); both branches agree to better than 1e-9 at the crossover.
constexpr double kAsymptoticCrossover = 1e6;

PointerStateSpec fixed_point_exact(double kappa) {
    const double k2 = kappa * kappa;
    const double s = std::sqrt(16.0 * k2 + 1.0);
    PointerStateSpec ps;
    ps.kappa = kappa;
    ps.var_x = (1.0 + std::sqrt(1.0 + (64.0 * k2 + 1.0) * s)) / (8.0 * k2 * s);
    ps.cov_xp = (4.0 * kappa - std::sqrt(s - 1.0)) / (kappa * s);
    ps.var_p = (1.0 / k2 + ps.cov_xp * ps.cov_xp) / (4.0 * ps.var_x);
    return ps;
}

PointerStateSpec fixed_point_asymptotic(double kappa) {
    const double s = 1.0 / std::sqrt(kappa); // expansion parameter
    PointerStateSpec ps;
    ps.kappa = kappa;
    ps.var_x = 0.5 * std::pow(kappa, -1.5) * (1.0 + s * s * s / 16.0 - s * s * s * s / 32.0);
    ps.cov_xp = (1.0 / kappa) * (1.0 - 0.5 * s + s * s * s / 16.0);
    ps.var_p = s * (1.0 - 0.5 * s + s * s / 8.0 + s * s * s / 16.0);
    return ps;
}

void warn_non_gaussian_once(double defect) {
    static bool warned = false;
    if (!warned) {
        warned = true;
        std::fprintf(stderr,
                     "qbm: warning: moment ODE input violates the Gaussian "
                     "variance identity (defect %.3e); the closed equations "
                     "assume a pure Gaussian packet\n",
                     defect);
    }
}

} // namespace

PointerStateSpec pointer_fixed_point(double kappa) {
    if (!(kappa > 0.0))
        throw DomainError("pointer_fixed_point: kappa must be positive");
    return kappa > kAsymptoticCrossover ? fixed_point_asymptotic(kappa)
                                        : fixed_point_exact(kappa);
}

Moments moment_ode_rhs(const Moments& m, double kappa) {
    if (!(m.var_x > 0.0))
        throw DomainError("moment_ode_rhs: var_x must be positive");
    const double k2 = kappa * kappa;
    const double c = m.cov_xp;
    const double defect = heisenberg_defect(m, kappa);
    if (std::abs(defect) > 1e-6 * 4.0 * m.var_x * m.var_p)
        warn_non_gaussian_once(defect);

    Moments d;
    d.mean_x = m.mean_p;
    d.mean_p = -m.mean_p;
    d.var_x = c - m.var_x * (4.0 * k2 * m.var_x - 1.0) +
              (1.0 - k2 * c * c) / (16.0 * k2);
    d.cov_xp = (1.0 + k2 * c * c) / (16.0 * k2) * (8.0 - c) / m.var_x -
               4.0 * k2 * c * m.var_x;
    // Vp' from differentiating 4 Vx Vp = 1/k^2 + Cxp^2.
    d.var_p = (c * d.cov_xp) / (2.0 * m.var_x) - m.var_p * d.var_x / m.var_x;
    return d;
}

std::vector<std::pair<double, Moments>> integrate_moments(
    const Moments& m0, double kappa, double t_final, double dt,
    int record_stride) {
    if (!(dt > 0.0) || t_final < 0.0)
        throw DomainError("integrate_moments: need dt > 0 and t_final >= 0");
    if (record_stride < 1)
        throw DomainError("integrate_moments: record_stride must be >= 1");

    // State vector (x, p, Vx, Cxp); Vp always reconstructed from the
    // Gaussian identity.
    struct S {
        double x, p, vx, c;
    };
    auto rhs = [kappa](const S& s) {
        if (!(s.vx > 0.0))
            throw StepSizeError(
                "integrate_moments: var_x left (0, inf) inside an RK stage; reduce dt");
        Moments m{s.x, s.p, s.vx, 0.0, s.c};
        m.var_p = (1.0 / (kappa * kappa) + s.c * s.c) / (4.0 * s.vx);
        Moments d = moment_ode_rhs(m, kappa);
        return S{d.mean_x, d.mean_p, d.var_x, d.cov_xp};
    };
    auto axpy = [](const S& a, double h, const S& b) {
        return S{a.x + h * b.x, a.p + h * b.p, a.vx + h * b.vx, a.c + h * b.c};
    };
    auto to_moments = [kappa](const S& s) {
        Moments m{s.x, s.p, s.vx, 0.0, s.c};
        m.var_p = (1.0 / (kappa * kappa) + s.c * s.c) / (4.0 * s.vx);
        return m;
    };

    S s{m0.mean_x, m0.mean_p, m0.var_x, m0.cov_xp};
    if (!(s.vx > 0.0))
        throw DomainError("integrate_moments: var_x must be positive");

    const long n_steps = std::lround(t_final / dt);
    std::vector<std::pair<double, Moments>> out;
    out.reserve(static_cast<std::size_t>(n_steps / record_stride) + 2);
    out.emplace_back(0.0, to_moments(s));

    for (long k = 0; k < n_steps; ++k) {
        S k1 = rhs(s);
        S k2s = rhs(axpy(s, 0.5 * dt, k1));
        S k3 = rhs(axpy(s, 0.5 * dt, k2s));
        S k4 = rhs(axpy(s, dt, k3));
        S next = s;
        next.x += dt / 6.0 * (k1.x + 2.0 * k2s.x + 2.0 * k3.x + k4.x);
        next.p += dt / 6.0 * (k1.p + 2.0 * k2s.p + 2.0 * k3.p + k4.p);
        next.vx += dt / 6.0 * (k1.vx + 2.0 * k2s.vx + 2.0 * k3.vx + k4.vx);
        next.c += dt / 6.0 * (k1.c + 2.0 * k2s.c + 2.0 * k3.c + k4.c);
        if (!(next.vx > 0.0) || !std::isfinite(next.vx))
            throw StepSizeError(
                "integrate_moments: var_x left (0, inf) at t = " +
                std::to_string((k + 1) * dt) + "; reduce dt");
        s = next;
        if ((k + 1) % record_stride == 0 || k + 1 == n_steps)
            out.emplace_back((k + 1) * dt, to_moments(s));
    }
    return out;
}

std::array<std::complex<double>, 2> stability_eigenvalues(double kappa) {
    if (!(kappa > 0.0))
        throw DomainError("stability_eigenvalues: kappa must be positive");
    const PointerStateSpec ps = pointer_fixed_point(kappa);
    const double k2 = kappa * kappa;
    const double v = ps.var_x;
    const double c = ps.cov_xp;

    // Jacobian of (Vx', Cxp') at the fixed point.
    const double j11 = 1.0 - 8.0 * k2 * v;
    const double j12 = 1.0 - c / 8.0;
    const double j21 = -(1.0 + k2 * c * c) * (8.0 - c) / (16.0 * k2 * v * v) -
                       4.0 * k2 * c;
    const double j22 = (2.0 * k2 * c * (8.0 - c) - (1.0 + k2 * c * c)) /
                           (16.0 * k2 * v) -
                       4.0 * k2 * v;

    const double tr = j11 + j22;
    const double det = j11 * j22 - j12 * j21;
    const std::complex<double> disc =
        std::sqrt(std::complex<double>(tr * tr - 4.0 * det, 0.0));
    return {0.5 * (tr + disc), 0.5 * (tr - disc)};
}

GridState pointer_wavefunction(const PointerStateSpec& spec, double mean_x,
                               double mean_p, const Grid& grid) {
    const double sigma_x = std::sqrt(spec.var_x);
    if (grid.dx() > sigma_x / 16.0)
        throw ResolutionError("pointer_wavefunction: grid under-resolved, need >= 16 points per sigma_x");
    if (mean_x - 6.0 * sigma_x < grid.x_min || mean_x + 6.0 * sigma_x > grid.x_max)
        throw ResolutionError("pointer_wavefunction: window must contain +-6 sigma_x around mean_x");
    return gaussian_state(grid, mean_x, mean_p, spec.var_x, spec.cov_xp);
}

} // namespace qbm
