#include "qbm/engine.hpp"

#include <algorithm>
#include <cmath>

#include "qbm/errors.hpp"
#include "qbm/gaussian.hpp"

namespace qbm {

namespace {

constexpr double kDegenerateJumpNorm = 1e-12;

// exp(x) with a quartic Taylor shortcut for the tiny arguments that dominate
// the diagonal damping factors (error < 9e-13 at |x| = 0.01).
inline double fast_exp(double x) {
    if (std::abs(x) < 0.01)
        return 1.0 + x * (1.0 + x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0))));
    return std::exp(x);
}

} // namespace

double jump_rate_formula(const Moments& m, double kappa) {
    return 2.0 * kappa * kappa * m.var_x + m.var_p / 8.0 - 0.5;
}

double NlpseEngine::default_dt(double kappa) {
    const PointerStateSpec ps = pointer_fixed_point(kappa);
    const double r = std::max(jump_rate_formula(
        Moments{0.0, 0.0, ps.var_x, ps.var_p, ps.cov_xp}, kappa), 1e-12);
    return std::min(1e-4, 0.1 / r);
}

double NlpseEngine::max_stable_dt(double kappa) {
    // Explicit freezing of the nonlinear coefficients needs dt well below
    // the pointer relaxation/jump scale; factor 4 over the default held up
    // in the refinement studies.
    return 4.0 * default_dt(kappa);
}

NlpseEngine::NlpseEngine(int n, double kappa, EngineOptions opt)
    : n_(n), kappa_(kappa), opt_(opt), ws_(n) {
    if (!(kappa > 0.0))
        throw DomainError("NlpseEngine: kappa must be positive");
    if (opt_.dt == 0.0)
        opt_.dt = default_dt(kappa);
    if (!(opt_.dt > 0.0))
        throw DomainError("NlpseEngine: dt must be positive");
    if (opt_.dt > max_stable_dt(kappa))
        throw StepSizeError("NlpseEngine: dt exceeds the stability bound");
    hat_.resize(n);
    ppsi_.resize(n);
    work_.resize(n);
    cn_b_.resize(n);
    cn_c_.resize(n);
    cn_y_.resize(n);
}

void NlpseEngine::compute_moments(const GridState& state, MomentReading& out) {
    const Grid& g = state.grid;
    if (g.n != n_)
        throw AlignmentError("NlpseEngine: grid size mismatch");
    if (g.kappa != kappa_)
        throw AlignmentError("NlpseEngine: state kappa mismatch");
    const double dx = g.dx();
    refresh_momentum_tables(g, 0.5 * opt_.dt);

    double n2 = 0.0, sx = 0.0, sxx = 0.0;
    for (int i = 0; i < n_; ++i) {
        const double w = std::norm(state.amp[i]);
        const double x = g.x_min + i * dx;
        n2 += w;
        sx += w * x;
        sxx += w * x * x;
    }
    n2 *= dx;
    sx *= dx;
    sxx *= dx;

    Moments m;
    m.mean_x = sx / n2;
    m.var_x = sxx / n2 - m.mean_x * m.mean_x;

    std::copy(state.amp.begin(), state.amp.end(), hat_.begin());
    ws_.forward(hat_.data());
    double np = 0.0, sp = 0.0, spp = 0.0;
    for (int k = 0; k < n_; ++k) {
        const double w = std::norm(hat_[k]);
        const double p = p_values_[k];
        np += w;
        sp += w * p;
        spp += w * p * p;
    }
    m.mean_p = sp / np;
    m.var_p = spp / np - m.mean_p * m.mean_p;

    const double inv_n = 1.0 / n_;
    for (int k = 0; k < n_; ++k)
        ppsi_[k] = hat_[k] * p_values_[k];
    ws_.backward(ppsi_.data());
    double sxp = 0.0;
    for (int i = 0; i < n_; ++i) {
        ppsi_[i] *= inv_n;
        sxp += (g.x_min + i * dx) * (std::conj(state.amp[i]) * ppsi_[i]).real();
    }
    sxp *= 2.0 * dx;
    m.cov_xp = sxp / n2 - 2.0 * m.mean_x * m.mean_p;

    out.moments = m;
    out.tainted = state.edge_ratio() > opt_.leakage_ratio;
}

MomentReading NlpseEngine::measure(const GridState& state) {
    MomentReading r;
    compute_moments(state, r);
    return r;
}

// The kinetic phase exp(-i tau k/2 p^2) is fixed once the momentum grid is;
// cache it and fold the state-dependent pieces into per-call scalars.
void NlpseEngine::refresh_momentum_tables(const Grid& g, double tau) {
    if (kin_width_ == g.width() && kin_tau_ == tau)
        return;
    kin_width_ = g.width();
    kin_tau_ = tau;
    p_values_.resize(n_);
    kin_phase_.resize(n_);
    for (int k = 0; k < n_; ++k) {
        p_values_[k] = g.p(k);
        kin_phase_[k] = std::polar(1.0, -tau * 0.5 * kappa_ * p_values_[k] * p_values_[k]);
    }
}

void NlpseEngine::apply_momentum_factor(std::vector<std::complex<double>>& hat,
                                        const Grid& g, const Moments& m,
                                        double tau) {
    refresh_momentum_tables(g, tau);
    const double p2_mean = m.var_p + m.mean_p * m.mean_p;
    // Constant phase from the <p^2> counterterm.
    const std::complex<double> scalar = std::polar(1.0, tau * 0.5 * kappa_ * p2_mean);
    const double c = tau / 16.0;
    for (int k = 0; k < n_; ++k) {
        const double dp = p_values_[k] - m.mean_p;
        hat[k] *= fast_exp(c * (m.var_p - dp * dp)) * kin_phase_[k] * scalar;
    }
}

void NlpseEngine::apply_position_factor(GridState& state, const Moments& m,
                                        double tau) const {
    const double k2 = kappa_ * kappa_;
    // The position factor's phase i kappa Cxp / 4 is x-independent.
    const std::complex<double> scalar = std::polar(1.0, tau * 0.25 * kappa_ * m.cov_xp);
    const double dx = state.grid.dx();
    const double u0 = state.grid.x_min - m.mean_x;
    for (int i = 0; i < n_; ++i) {
        const double u = u0 + i * dx;
        state.amp[i] *= fast_exp(tau * (k2 * (m.var_x - u * u) - 0.25)) * scalar;
    }
}

// Crank-Nicolson for G = -(1/2)(x - x0) d_x - i (kappa/2) p0 (x - x0), the
// finite-difference form of the non-Hermitian advection term. The operator
// ordering (x - x0) to the left of p_op is kept as written; no
// symmetrization. The plain central-difference stencil has a spurious
// symmetric part (1/4 + dx^2/8 d_xx); the stencil below shifts the 1/8
// couplings onto the off-diagonals so the symmetric part is exactly the
// continuum 1/4 and the commutator-driven norm growth cancels the position
// factor's -1/4 without an O(dx^2) residue. Unconditionally stable.
void NlpseEngine::apply_mixed_cn(GridState& state, const Moments& m, double tau) {
    const Grid& g = state.grid;
    const double dx = g.dx();
    const double beta = 0.5 * tau;
    const double ph = 0.5 * kappa_ * m.mean_p;

    auto& diag = cn_b_;
    auto& super = cn_c_;
    auto& sub = work_;
    auto& y = cn_y_;
    for (int i = 0; i < n_; ++i) {
        const double u = g.x(i) - m.mean_x;
        const double adv = 0.5 * u / (2.0 * dx);
        // G' rows: (i,i-1) = adv - 1/8, (i,i) = 1/4 - i ph u,
        //          (i,i+1) = -adv - 1/8.
        const std::complex<double> gd(0.25, -ph * u);
        const std::complex<double> gl(adv - 0.125, 0.0);
        const std::complex<double> gr(-adv - 0.125, 0.0);
        diag[i] = 1.0 - beta * gd;
        sub[i] = -beta * gl;
        super[i] = -beta * gr;
        const std::complex<double> left = i > 0 ? state.amp[i - 1] : 0.0;
        const std::complex<double> right = i + 1 < n_ ? state.amp[i + 1] : 0.0;
        y[i] = (1.0 + beta * gd) * state.amp[i] + beta * gl * left + beta * gr * right;
    }
    // Thomas sweep (general complex tridiagonal).
    std::complex<double> piv = diag[0];
    state.amp[0] = y[0] / piv;
    for (int i = 1; i < n_; ++i) {
        cn_y_[i - 1] = super[i - 1] / piv; // reuse as the c' scratch
        piv = diag[i] - sub[i] * cn_y_[i - 1];
        state.amp[i] = (y[i] - sub[i] * state.amp[i - 1]) / piv;
    }
    for (int i = n_ - 2; i >= 0; --i)
        state.amp[i] -= cn_y_[i] * state.amp[i + 1];
}

void NlpseEngine::propagate_from_hat(GridState& state, const Moments& m) {
    const Grid& g = state.grid;
    const double half = 0.5 * opt_.dt;
    std::copy(hat_.begin(), hat_.end(), work_.begin());
    apply_momentum_factor(work_, g, m, half);
    ws_.backward(work_.data());
    const double inv_n = 1.0 / n_;
    for (int i = 0; i < n_; ++i)
        state.amp[i] = work_[i] * inv_n;

    apply_position_factor(state, m, half);
    apply_mixed_cn(state, m, opt_.dt);
    apply_position_factor(state, m, half);

    ws_.forward(state.amp.data());
    apply_momentum_factor(state.amp, g, m, half);
    ws_.backward(state.amp.data());
    for (int i = 0; i < n_; ++i)
        state.amp[i] *= inv_n;
}

void NlpseEngine::step(GridState& state) {
    compute_moments(state, last_reading_);
    const Moments m0 = last_reading_.moments;
    Moments m = m0;

    if (opt_.corrector) {
        GridState pred = state;
        propagate_from_hat(pred, m0);
        MomentReading r1;
        // compute_moments clobbers hat_; keep the original spectrum around.
        std::swap(hat_, work_);
        compute_moments(pred, r1);
        std::swap(hat_, work_);
        const Moments& m1 = r1.moments;
        m.mean_x = 0.5 * (m0.mean_x + m1.mean_x);
        m.mean_p = 0.5 * (m0.mean_p + m1.mean_p);
        m.var_x = 0.5 * (m0.var_x + m1.var_x);
        m.var_p = 0.5 * (m0.var_p + m1.var_p);
        m.cov_xp = 0.5 * (m0.cov_xp + m1.cov_xp);
    }

    propagate_from_hat(state, m);

    const double nrm = state.norm();
    if (!std::isfinite(nrm))
        throw NumericalError("NlpseEngine: non-finite amplitudes after step");
    last_norm_drift_ = std::abs(nrm - 1.0);
    if (last_norm_drift_ > opt_.norm_drift_tol)
        throw StepSizeError("NlpseEngine: per-step norm drift " +
                            std::to_string(last_norm_drift_) +
                            " exceeds tolerance; reduce dt");
    state.renormalize();

    if (opt_.recenter)
        maybe_recenter(state, m.mean_x + opt_.dt * m.mean_p);
}

void NlpseEngine::maybe_recenter(GridState& state, double mean_x) {
    Grid& g = state.grid;
    if (std::abs(mean_x - g.center()) <= opt_.recenter_fraction * g.width())
        return;
    const long shift = std::lround((mean_x - g.center()) / g.dx());
    if (shift == 0 || std::abs(shift) >= g.n / 2)
        return;
    // Reinterpret the window: identical amplitudes at identical physical x;
    // the wrapped-in edge values are below the leakage threshold by contract.
    if (shift > 0)
        std::rotate(state.amp.begin(), state.amp.begin() + shift, state.amp.end());
    else
        std::rotate(state.amp.begin(), state.amp.end() + shift, state.amp.end());
    const double offset = shift * g.dx(); // fixed before touching the bounds
    g.x_min += offset;
    g.x_max += offset;
}

double NlpseEngine::jump_rate(const GridState& state) {
    MomentReading r;
    compute_moments(state, r);
    const double raw = jump_rate_formula(r.moments, kappa_);
    rate_clamped_ = raw < 0.0;
    return std::max(raw, 0.0);
}

void NlpseEngine::apply_jump(GridState& state, double tilt) {
    MomentReading r;
    compute_moments(state, r); // fills ppsi_ with p_op psi
    const Moments m = r.moments;
    if (!(jump_rate_formula(m, kappa_) > 0.0))
        throw DomainError("apply_jump: jump rate is not positive for this state");

    const double s2 = std::sqrt(2.0);
    for (int i = 0; i < n_; ++i) {
        const double u = state.grid.x(i) - m.mean_x;
        const std::complex<double> dp = ppsi_[i] - m.mean_p * state.amp[i];
        state.amp[i] = s2 * (kappa_ * u * state.amp[i] +
                             std::complex<double>(0.0, 0.25) * dp);
    }
    const double nrm = state.norm();
    if (!(nrm > kDegenerateJumpNorm))
        throw NumericalError("apply_jump: degenerate jump, ||J psi|| ~ 0");
    state.renormalize();

    if (tilt != 0.0) {
        MomentReading post;
        compute_moments(state, post);
        const double inv_sigma = 1.0 / std::sqrt(post.moments.var_x);
        for (int i = 0; i < n_; ++i) {
            const double u = state.grid.x(i) - post.moments.mean_x;
            state.amp[i] *= 1.0 + tilt * u * inv_sigma;
        }
        state.renormalize();
    }
}

} // namespace qbm
