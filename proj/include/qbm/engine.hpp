#pragma once

#include <complex>
#include <vector>

#include "qbm/grid.hpp"
#include "qbm/model.hpp"

namespace qbm {

struct EngineOptions {
    double dt = 0.0;        // 0 -> default_dt(kappa)
    bool corrector = true;  // one fixed-point re-evaluation of the frozen moments
    bool recenter = true;   // moving window
    double recenter_fraction = 0.25;
    double norm_drift_tol = 1e-6; // per-step pre-normalization drift
    double leakage_ratio = 1e-8;
};

// Deterministic NLPSE propagator plus jump application on a fixed grid size.
// One step applies, in Strang order (half, half, full, half, half):
//   K: momentum-diagonal factor  -i k/2 (p^2 - <p^2>) + (Vp - (p-p0)^2)/16,
//   X: position-diagonal factor  k^2 (Vx - (x-x0)^2) - 1/4 + i k Cxp/4,
//   M: mixed advection          -i k/2 (x-x0)(p_op + p0),
// K and X as exact exponentials in their diagonal bases, M by a
// Crank-Nicolson tridiagonal solve of its finite-difference form. The
// expectation values inside the operators are frozen at the step start and
// (by default) refined once by a predictor-corrector pass.
class NlpseEngine {
public:
    NlpseEngine(int n, double kappa, EngineOptions opt = {});

    double dt() const { return opt_.dt; }
    double kappa() const { return kappa_; }
    const EngineOptions& options() const { return opt_; }

    // Default step: min(1e-4, 0.1 / r_ps(kappa)).
    static double default_dt(double kappa);
    // Empirical stability/accuracy bound for the explicit treatment of the
    // nonlinearity (see README).
    static double max_stable_dt(double kappa);

    MomentReading measure(const GridState& state);

    // One NLPSE step of size dt(). Asserts the pre-normalization norm drift
    // stays below norm_drift_tol, renormalizes, and recenters the moving
    // window when the packet mean strays from the grid center.
    void step(GridState& state);

    // J[psi] |psi> / ||.|| with J = sqrt(2)(kappa (x - x0) + i/4 (p_op - p0)),
    // the means frozen at their pre-jump values. A jump from a
    // parity-symmetric state lands exactly on the unstable symmetric
    // double-peak, which never selects a branch in exact arithmetic; `tilt`
    // admixes an odd perturbation tilt * (x - x0)/sigma_x that stands in for
    // the generic asymmetry real states carry (the surviving peak is the
    // tilt's sign). Zero keeps the bare operator.
    void apply_jump(GridState& state, double tilt = 0.0);

    // r = 2 k^2 Vx + Vp/8 - 1/2, clamped at zero (negative values can only
    // come from sub-Heisenberg inputs and are flagged).
    double jump_rate(const GridState& state);
    bool last_rate_clamped() const { return rate_clamped_; }

    // Moments measured at the top of the most recent step().
    const MomentReading& last_reading() const { return last_reading_; }
    // |norm - 1| before the final renormalization of the last step; O(dt^2).
    double last_norm_drift() const { return last_norm_drift_; }

private:
    void compute_moments(const GridState& state, MomentReading& out);
    void refresh_momentum_tables(const Grid& g, double tau);
    void apply_momentum_factor(std::vector<std::complex<double>>& hat,
                               const Grid& g, const Moments& m, double tau);
    void apply_position_factor(GridState& state, const Moments& m, double tau) const;
    void apply_mixed_cn(GridState& state, const Moments& m, double tau);
    // Runs X M X plus the trailing K from a prepared momentum representation.
    void propagate_from_hat(GridState& state, const Moments& m);
    void maybe_recenter(GridState& state, double mean_x);

    int n_;
    double kappa_;
    EngineOptions opt_;
    SpectralWorkspace ws_;
    std::vector<std::complex<double>> hat_;   // FFT of the last measured state
    std::vector<std::complex<double>> ppsi_;  // p_op psi of the last measured state
    std::vector<std::complex<double>> work_;
    std::vector<std::complex<double>> cn_b_, cn_c_, cn_y_;
    std::vector<double> p_values_;
    std::vector<std::complex<double>> kin_phase_;
    double kin_width_ = 0.0;
    double kin_tau_ = 0.0;
    MomentReading last_reading_;
    double last_norm_drift_ = 0.0;
    bool rate_clamped_ = false;
};

double jump_rate_formula(const Moments& m, double kappa); // unclamped

struct PurityRate {
    double rate;         // Eq.-level jump rate of the state
    double purity_slope; // (1/2) d/dt [1 - Tr rho^2] from one ME step
};

// Delegates to the density-matrix oracle: propagates |psi><psi| and compares
// the purity-loss rate with the state's jump rate (grid n <= 256).
PurityRate purity_rate_check(const GridState& state, double dt);

} // namespace qbm
