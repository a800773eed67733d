#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "qbm/model.hpp"

namespace qbm {

// Semiclassical model of pointer-state trajectories: jumps of fixed
// phase-space length j = sqrt(2 V_ps) at the pointer-state rate.
struct JumpModelParams {
    double kappa;
    double j_x;  // sqrt(2 Vx_ps)
    double j_p;  // sqrt(2 Vp_ps)
    double r_ps; // 2 k^2 Vx_ps + Vp_ps/8 - 1/2
};

JumpModelParams jump_model_params(double kappa);

struct DiffusionConstants {
    double d_x = 0.0;
    double d_p = 0.0;
    double d_xp = 0.0;
    enum class Source { Analytic, Fitted } source = Source::Analytic;
    struct Uncertainty {
        double d_x, d_p, d_xp;
    };
    std::optional<Uncertainty> sigma; // fitted only
};

// D_x = j_x^2 r, D_p = j_p^2 r, D_xp = j_x j_p r; rank-one by construction,
// so D_xp^2 = D_x D_p exactly.
DiffusionConstants analytic_diffusion(double kappa);

struct PhaseSample {
    double t, x, p;
};

// Two opposite jump vectors, each a Poisson clock at rate r_ps/2, riding on
// the damped drift (dx, dp) = (p, -p) dt. Sampled as one clock of rate r_ps
// with a fair sign coin; drift integrated exactly between events. Requires
// dt <= 0.05 / r_ps.
std::vector<PhaseSample> simulate_jump_sde(const JumpModelParams& params,
                                           double x0, double p0, double t_final,
                                           double dt, std::uint64_t seed);

struct LangevinLimit {
    double d_p;               // analytic D_p(kappa)
    double drift_coefficient; // -1 in dimensionless form
    double noise_amplitude;   // sqrt(D_p)
    // With physical inputs: dp = -2 gamma p dt + sqrt(4 gamma m kB T) dW.
    std::optional<double> physical_drift;
    std::optional<double> physical_noise;
};

LangevinLimit langevin_limit(double kappa,
                             const std::optional<PhysicalInputs>& physical = {});

} // namespace qbm
