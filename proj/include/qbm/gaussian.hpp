#pragma once

#include <array>
#include <complex>
#include <utility>
#include <vector>

#include "qbm/model.hpp"

namespace qbm {

struct Grid;
struct GridState;

// Gaussian pointer-state shape for a given kappa. The variances satisfy
// 4 Vx Vp = 1/kappa^2 + Cxp^2 exactly; phase is tracked but never evolved.
struct PointerStateSpec {
    double kappa;
    double var_x;
    double var_p;
    double cov_xp;
    double phase = 0.0;
};

// Stable fixed point of the variance flow. Exact closed forms for
// kappa <= 1e6, asymptotic expansions beyond (crossover agrees to < 1e-9).
PointerStateSpec pointer_fixed_point(double kappa);

// Right-hand side of the closed moment equations for a Gaussian packet:
//   x' = p, p' = -p,
//   Vx' = Cxp - Vx (4 k^2 Vx - 1) + (1 - k^2 Cxp^2) / (16 k^2),
//   Cxp' = (1 + k^2 Cxp^2)/(16 k^2) * (8 - Cxp)/Vx - 4 k^2 Cxp Vx,
// with Vp' implied by the Gaussian variance identity. Throws DomainError if
// var_x <= 0. Warns (once per process) when the input violates the Gaussian
// identity beyond 1e-6 relative since the closed set assumes a pure Gaussian.
Moments moment_ode_rhs(const Moments& m, double kappa);

// Classical fixed-step RK4 on (x, p, Vx, Cxp); Vp is reconstructed from the
// Gaussian identity at every sample so the identity holds along the whole
// trajectory by construction. Throws StepSizeError if Vx would leave (0, inf).
std::vector<std::pair<double, Moments>> integrate_moments(
    const Moments& m0, double kappa, double t_final, double dt,
    int record_stride = 1);

// Eigenvalues of the Jacobian of the (Vx, Cxp) flow at the fixed point.
// Both real parts are strictly negative for every kappa > 0.
std::array<std::complex<double>, 2> stability_eigenvalues(double kappa);

// Discretized Gaussian of the pointer-state form placed at (mean_x, mean_p),
// normalized on the grid. Requires >= 16 points per position standard
// deviation and +-6 standard deviations inside the window, else throws
// ResolutionError.
GridState pointer_wavefunction(const PointerStateSpec& spec, double mean_x,
                               double mean_p, const Grid& grid);

} // namespace qbm
