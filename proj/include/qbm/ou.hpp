#pragma once

#include <cstdint>
#include <vector>

#include "qbm/jump_model.hpp"

namespace qbm {

// Two-dimensional Ornstein-Uhlenbeck process
//   dx = p dt + B11 dW1 + B12 dW2,
//   dp = -p dt + B21 dW1 + B22 dW2.
struct OUParams {
    double b11 = 0.0, b12 = 0.0, b21 = 0.0, b22 = 0.0;

    double d_x() const { return b11 * b11 + b12 * b12; }
    double d_p() const { return b21 * b21 + b22 * b22; }
    double d_xp() const { return b11 * b21 + b12 * b22; }
};

// Lower-triangular-style realization of the given diffusion constants
// (the rotation freedom in B is unobservable; this convention is fixed).
// Throws DomainError if D_xp^2 > D_x D_p.
OUParams ou_from_diffusion(const DiffusionConstants& d);

struct SecondMoments {
    double var_x, var_p, cov_xp;
};

// Closed forms for zero initial second moments:
//   Var[p] = D_p (1 - e^{-2t}) / 2,
//   Cov    = D_p (1 - e^{-t})^2 / 2 + D_xp (1 - e^{-t}),
//   Var[x] = (D_x + D_p + 2 D_xp) t - D_p (1 - e^{-t})^2 / 2
//            - (D_p + 2 D_xp)(1 - e^{-t}).
SecondMoments ou_moments(const DiffusionConstants& d, double t);

// d/dt of (Var[x], Var[p], Cov): (2 Cov + D_x, -2 Var[p] + D_p,
// -Cov + Var[p] + D_xp).
SecondMoments ou_moment_ode_rhs(const SecondMoments& m, const DiffusionConstants& d);

// Euler-Maruyama with independent standard-normal increments.
std::vector<PhaseSample> simulate_ou(const OUParams& params, double x0, double p0,
                                     double t_final, double dt, std::uint64_t seed);

struct FiniteSampleLaws {
    double var_mean_x;  // Var[E_N[x]]   = Var[x]/N
    double var_mean_p;  // Var[E_N[p]]   = Var[p]/N
    double var_var_x;   // Var[Var_N[x]] = 2 Var[x]^2/(N-1)
    double var_var_p;   // Var[Var_N[p]] = 2 Var[p]^2/(N-1)
    double var_cov_xp;  // Var[Cov_N]    = (Var[x]Var[p] + Cov^2)/(N-1)
};

// Predicted spread of the size-N sample statistics at time t. N >= 2.
FiniteSampleLaws finite_sample_laws(const DiffusionConstants& d, double t, long n);

} // namespace qbm
