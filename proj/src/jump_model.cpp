#include "qbm/jump_model.hpp"

#include <cmath>

#include "qbm/errors.hpp"
#include "qbm/gaussian.hpp"
#include "qbm/rng.hpp"

namespace qbm {

JumpModelParams jump_model_params(double kappa) {
    const PointerStateSpec ps = pointer_fixed_point(kappa);
    const double r_ps =
        2.0 * kappa * kappa * ps.var_x + ps.var_p / 8.0 - 0.5;
    if (!(r_ps > 0.0))
        throw DomainError("jump_model_params: pointer-state jump rate not positive at this kappa");
    return JumpModelParams{kappa, std::sqrt(2.0 * ps.var_x),
                           std::sqrt(2.0 * ps.var_p), r_ps};
}

DiffusionConstants analytic_diffusion(double kappa) {
    const JumpModelParams jm = jump_model_params(kappa);
    DiffusionConstants d;
    d.d_x = jm.j_x * jm.j_x * jm.r_ps;
    d.d_p = jm.j_p * jm.j_p * jm.r_ps;
    d.d_xp = jm.j_x * jm.j_p * jm.r_ps;
    d.source = DiffusionConstants::Source::Analytic;
    return d;
}

std::vector<PhaseSample> simulate_jump_sde(const JumpModelParams& params,
                                           double x0, double p0, double t_final,
                                           double dt, std::uint64_t seed) {
    if (!(dt > 0.0) || !(t_final >= 0.0))
        throw DomainError("simulate_jump_sde: need dt > 0 and t_final >= 0");
    if (params.r_ps > 0.0 && dt > 0.05 / params.r_ps)
        throw DomainError("simulate_jump_sde: dt must satisfy dt <= 0.05 / r_ps");

    Rng rng(seed);
    double x = x0, p = p0, t = 0.0;
    double t_next = params.r_ps > 0.0
                        ? rng.exponential() / params.r_ps
                        : std::numeric_limits<double>::infinity();

    auto drift = [&](double tau) { // exact map of dx = p dt, dp = -p dt
        x += p * (1.0 - std::exp(-tau));
        p *= std::exp(-tau);
    };

    const long n_steps = std::lround(t_final / dt);
    std::vector<PhaseSample> out;
    out.reserve(n_steps + 1);
    out.push_back({0.0, x, p});

    for (long k = 0; k < n_steps; ++k) {
        const double t_end = (k + 1) * dt;
        while (t_next <= t_end) {
            drift(t_next - t);
            t = t_next;
            const double sign = rng.coin() ? 1.0 : -1.0;
            x += sign * params.j_x;
            p += sign * params.j_p;
            t_next = t + rng.exponential() / params.r_ps;
        }
        drift(t_end - t);
        t = t_end;
        out.push_back({t, x, p});
    }
    return out;
}

LangevinLimit langevin_limit(double kappa,
                             const std::optional<PhysicalInputs>& physical) {
    LangevinLimit lim;
    lim.d_p = analytic_diffusion(kappa).d_p;
    lim.drift_coefficient = -1.0;
    lim.noise_amplitude = std::sqrt(lim.d_p);
    if (physical) {
        const PhysicalInputs& in = *physical;
        if (!(in.mass > 0.0) || !(in.temperature > 0.0) || !(in.friction > 0.0))
            throw DomainError("langevin_limit: physical inputs must be positive");
        lim.physical_drift = -2.0 * in.friction;
        lim.physical_noise = std::sqrt(4.0 * in.friction * in.mass *
                                       in.k_boltzmann * in.temperature);
    }
    return lim;
}

} // namespace qbm
