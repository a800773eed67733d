#include "qbm/ou.hpp"

#include <cmath>

#include "qbm/errors.hpp"
#include "qbm/rng.hpp"

namespace qbm {

OUParams ou_from_diffusion(const DiffusionConstants& d) {
    if (!(d.d_x >= 0.0) || !(d.d_p >= 0.0))
        throw DomainError("ou_from_diffusion: diffusion constants must be nonnegative");
    if (d.d_xp * d.d_xp > d.d_x * d.d_p * (1.0 + 1e-12))
        throw DomainError("ou_from_diffusion: D_xp^2 <= D_x D_p violated");
    OUParams b;
    if (d.d_x > 0.0) {
        b.b11 = std::sqrt(d.d_x);
        b.b21 = d.d_xp / b.b11;
        b.b22 = std::sqrt(std::max(d.d_p - b.b21 * b.b21, 0.0));
    } else {
        // Degenerate position block: Cauchy-Schwarz forces D_xp = 0, realize
        // the momentum noise on the second channel.
        b.b22 = std::sqrt(d.d_p);
    }
    return b;
}

SecondMoments ou_moments(const DiffusionConstants& d, double t) {
    if (!(t >= 0.0))
        throw DomainError("ou_moments: t must be >= 0");
    const double e1 = 1.0 - std::exp(-t);
    const double e2 = 1.0 - std::exp(-2.0 * t);
    SecondMoments m;
    m.var_p = 0.5 * d.d_p * e2;
    m.cov_xp = 0.5 * d.d_p * e1 * e1 + d.d_xp * e1;
    m.var_x = (d.d_x + d.d_p + 2.0 * d.d_xp) * t - 0.5 * d.d_p * e1 * e1 -
              (d.d_p + 2.0 * d.d_xp) * e1;
    return m;
}

SecondMoments ou_moment_ode_rhs(const SecondMoments& m, const DiffusionConstants& d) {
    return SecondMoments{2.0 * m.cov_xp + d.d_x, -2.0 * m.var_p + d.d_p,
                         -m.cov_xp + m.var_p + d.d_xp};
}

std::vector<PhaseSample> simulate_ou(const OUParams& params, double x0, double p0,
                                     double t_final, double dt, std::uint64_t seed) {
    if (!(dt > 0.0) || !(t_final >= 0.0))
        throw DomainError("simulate_ou: need dt > 0 and t_final >= 0");
    Rng rng(seed);
    const double sq = std::sqrt(dt);
    double x = x0, p = p0;
    const long n_steps = std::lround(t_final / dt);
    std::vector<PhaseSample> out;
    out.reserve(n_steps + 1);
    out.push_back({0.0, x, p});
    for (long k = 0; k < n_steps; ++k) {
        const double w1 = sq * rng.normal();
        const double w2 = sq * rng.normal();
        const double xn = x + p * dt + params.b11 * w1 + params.b12 * w2;
        const double pn = p - p * dt + params.b21 * w1 + params.b22 * w2;
        x = xn;
        p = pn;
        out.push_back({(k + 1) * dt, x, p});
    }
    return out;
}

FiniteSampleLaws finite_sample_laws(const DiffusionConstants& d, double t, long n) {
    if (n < 2)
        throw DomainError("finite_sample_laws: need N >= 2");
    const SecondMoments m = ou_moments(d, t);
    FiniteSampleLaws law;
    law.var_mean_x = m.var_x / n;
    law.var_mean_p = m.var_p / n;
    law.var_var_x = 2.0 * m.var_x * m.var_x / (n - 1);
    law.var_var_p = 2.0 * m.var_p * m.var_p / (n - 1);
    law.var_cov_xp = (m.var_x * m.var_p + m.cov_xp * m.cov_xp) / (n - 1);
    return law;
}

} // namespace qbm
