#include "qbm/me_oracle.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <mutex>

#include "qbm/engine.hpp"
#include "qbm/errors.hpp"

namespace qbm {

namespace {

constexpr int kMaxOracleGrid = 256;

std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

// Spectral wavenumber for axis derivatives (not kappa-scaled); Nyquist mode
// zeroed as usual for odd-order spectral derivatives.
double wavenumber(const Grid& g, int m) {
    if (m == g.n / 2)
        return 0.0;
    const int mm = m < g.n / 2 ? m : m - g.n;
    return 2.0 * M_PI * mm / g.width();
}

} // namespace

DensityMatrix DensityMatrix::pure(const GridState& psi) {
    if (psi.grid.n > kMaxOracleGrid)
        throw DomainError("DensityMatrix: oracle grids are limited to n <= 256");
    DensityMatrix d;
    d.grid = psi.grid;
    d.rho.resize(static_cast<std::size_t>(psi.grid.n) * psi.grid.n);
    const int n = psi.grid.n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            d.rho[static_cast<std::size_t>(i) * n + j] =
                psi.amp[i] * std::conj(psi.amp[j]);
    return d;
}

double DensityMatrix::trace() const {
    const int n = grid.n;
    double t = 0.0;
    for (int i = 0; i < n; ++i)
        t += rho[static_cast<std::size_t>(i) * n + i].real();
    return t * grid.dx();
}

double DensityMatrix::purity() const {
    double s = 0.0;
    for (const auto& v : rho)
        s += std::norm(v);
    return s * grid.dx() * grid.dx();
}

void DensityMatrix::rescale_trace() {
    const double t = trace();
    if (!(t > 0.0) || !std::isfinite(t))
        throw NumericalError("DensityMatrix: non-positive trace");
    const double inv = 1.0 / t;
    for (auto& v : rho)
        v *= inv;
}

double DensityMatrix::hermiticity_defect() const {
    const int n = grid.n;
    double peak = 0.0, defect = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const auto a = rho[static_cast<std::size_t>(i) * n + j];
            const auto b = rho[static_cast<std::size_t>(j) * n + i];
            peak = std::max(peak, std::abs(a));
            defect = std::max(defect, std::abs(a - std::conj(b)));
        }
    return peak > 0.0 ? defect / peak : 0.0;
}

double DensityMatrix::min_eigenvalue() const {
    const int n = grid.n;
    Eigen::MatrixXcd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            m(i, j) = rho[static_cast<std::size_t>(i) * n + j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() * grid.dx();
}

double MasterEquationEngine::max_stable_dt(int n) {
    // Explicit RK4 on the spectral friction advection; |lambda|_max ~ pi n.
    return 2.5 / (M_PI * n);
}

MasterEquationEngine::MasterEquationEngine(const Grid& grid, double dt)
    : grid_(grid), dt_(dt) {
    if (grid.n > kMaxOracleGrid)
        throw DomainError("MasterEquationEngine: oracle grids are limited to n <= 256");
    if (dt_ == 0.0)
        dt_ = std::min(1e-3, 0.5 * max_stable_dt(grid.n));
    if (!(dt_ > 0.0) || dt_ > max_stable_dt(grid.n))
        throw StepSizeError("MasterEquationEngine: dt outside the stable range");
    const std::size_t nn = static_cast<std::size_t>(grid.n) * grid.n;
    buf_.resize(nn);
    k1_.resize(nn);
    k2_.resize(nn);
    k3_.resize(nn);
    stage_.resize(nn);

    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    auto* ptr = reinterpret_cast<fftw_complex*>(buf_.data());
    plan_fwd_ = fftw_plan_dft_2d(grid.n, grid.n, ptr, ptr, FFTW_FORWARD,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
    plan_bwd_ = fftw_plan_dft_2d(grid.n, grid.n, ptr, ptr, FFTW_BACKWARD,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
}

MasterEquationEngine::~MasterEquationEngine() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
    fftw_destroy_plan(static_cast<fftw_plan>(plan_bwd_));
}

void MasterEquationEngine::fft2(std::complex<double>* a) {
    auto* ptr = reinterpret_cast<fftw_complex*>(a);
    fftw_execute_dft(static_cast<fftw_plan>(plan_fwd_), ptr, ptr);
}

void MasterEquationEngine::ifft2(std::complex<double>* a) {
    auto* ptr = reinterpret_cast<fftw_complex*>(a);
    fftw_execute_dft(static_cast<fftw_plan>(plan_bwd_), ptr, ptr);
    const double s = 1.0 / (static_cast<double>(grid_.n) * grid_.n);
    const std::size_t nn = static_cast<std::size_t>(grid_.n) * grid_.n;
    for (std::size_t i = 0; i < nn; ++i)
        a[i] *= s;
}

// -(1/2)(x - x') (d_x - d_x') rho, spectral derivatives.
void MasterEquationEngine::friction_rhs(const std::vector<std::complex<double>>& in,
                                        std::vector<std::complex<double>>& out) {
    const int n = grid_.n;
    std::copy(in.begin(), in.end(), out.begin());
    fft2(out.data());
    for (int m = 0; m < n; ++m) {
        const double km = wavenumber(grid_, m);
        for (int mp = 0; mp < n; ++mp) {
            const double kd = km - wavenumber(grid_, mp);
            out[static_cast<std::size_t>(m) * n + mp] *=
                std::complex<double>(0.0, kd);
        }
    }
    ifft2(out.data());
    for (int i = 0; i < n; ++i) {
        const double xi = grid_.x(i);
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(i) * n + j] *= -0.5 * (xi - grid_.x(j));
    }
}

// In the 2-D Fourier representation entry (m, m') carries ket momentum
// p(m) and bra momentum -p(m'), so the momentum dissipator is pointwise in
// (p(m) + p(m'))^2 and the kinetic commutator in p(m)^2 - p(m')^2.
void MasterEquationEngine::apply_momentum_factor(std::vector<std::complex<double>>& rho,
                                                 double tau) {
    const int n = grid_.n;
    const double k = grid_.kappa;
    fft2(rho.data());
    for (int m = 0; m < n; ++m) {
        const double pm = grid_.p(m);
        for (int mp = 0; mp < n; ++mp) {
            const double pp = grid_.p(mp);
            const double re = -tau / 16.0 * (pm + pp) * (pm + pp);
            const double im = -tau * 0.5 * k * (pm * pm - pp * pp);
            rho[static_cast<std::size_t>(m) * n + mp] *=
                std::polar(std::exp(re), im);
        }
    }
    ifft2(rho.data());
}

void MasterEquationEngine::step(DensityMatrix& d) {
    if (!(d.grid == grid_))
        throw AlignmentError("MasterEquationEngine: density matrix grid mismatch");
    const int n = grid_.n;
    auto& rho = d.rho;
    const double k2 = grid_.kappa * grid_.kappa;

    auto position_dissipator = [&](double tau) {
        for (int i = 0; i < n; ++i) {
            const double xi = grid_.x(i);
            for (int j = 0; j < n; ++j) {
                const double u = xi - grid_.x(j);
                rho[static_cast<std::size_t>(i) * n + j] *=
                    std::exp(-tau * k2 * u * u);
            }
        }
    };

    position_dissipator(0.5 * dt_);
    apply_momentum_factor(rho, 0.5 * dt_);

    // RK4 short-time expansion of the friction advection.
    const std::size_t nn = rho.size();
    friction_rhs(rho, k1_);
    for (std::size_t i = 0; i < nn; ++i)
        stage_[i] = rho[i] + 0.5 * dt_ * k1_[i];
    friction_rhs(stage_, k2_);
    for (std::size_t i = 0; i < nn; ++i)
        stage_[i] = rho[i] + 0.5 * dt_ * k2_[i];
    friction_rhs(stage_, k3_);
    for (std::size_t i = 0; i < nn; ++i)
        stage_[i] = rho[i] + dt_ * k3_[i];
    friction_rhs(stage_, stage_); // copies its input first, in-place is fine
    for (std::size_t i = 0; i < nn; ++i)
        rho[i] += dt_ / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + stage_[i]);

    apply_momentum_factor(rho, 0.5 * dt_);
    position_dissipator(0.5 * dt_);

    const double tr = d.trace();
    if (std::abs(tr - 1.0) > 1e-6)
        throw StepSizeError("MasterEquationEngine: trace drift exceeds tolerance");
    d.rescale_trace();
    // Hermiticity is preserved structurally; a nonzero defect signals window
    // truncation (tails touching the periodic seam). Monitored, fatal only
    // when gross.
    last_hermiticity_defect_ = d.hermiticity_defect();
    if (last_hermiticity_defect_ > 1e-6)
        throw NumericalError("MasterEquationEngine: density matrix lost hermiticity; enlarge the window");
}

Moments MasterEquationEngine::moments(const DensityMatrix& d) {
    if (!(d.grid == grid_))
        throw AlignmentError("MasterEquationEngine: density matrix grid mismatch");
    const int n = grid_.n;

    Moments m;
    double tr = 0.0, sx = 0.0, sxx = 0.0;
    for (int i = 0; i < n; ++i) {
        const double w = d.rho[static_cast<std::size_t>(i) * n + i].real();
        tr += w;
        sx += w * grid_.x(i);
        sxx += w * grid_.x(i) * grid_.x(i);
    }
    m.mean_x = sx / tr;
    m.var_x = sxx / tr - m.mean_x * m.mean_x;

    // Momentum diagonal of the 2-D transform: entry (m, (n-m) % n).
    std::copy(d.rho.begin(), d.rho.end(), buf_.begin());
    fft2(buf_.data());
    double np = 0.0, sp = 0.0, spp = 0.0;
    for (int mm = 0; mm < n; ++mm) {
        const double w = buf_[static_cast<std::size_t>(mm) * n + (n - mm) % n].real();
        const double p = grid_.p(mm);
        np += w;
        sp += w * p;
        spp += w * p * p;
    }
    m.mean_p = sp / np;
    m.var_p = spp / np - m.mean_p * m.mean_p;

    // <{x,p}> = 2 Re Tr(x p rho); (p rho)(x,x') = -(i/kappa) d_x rho.
    std::copy(d.rho.begin(), d.rho.end(), buf_.begin());
    fft2(buf_.data());
    for (int mm = 0; mm < n; ++mm) {
        const std::complex<double> f(0.0, wavenumber(grid_, mm));
        for (int mp = 0; mp < n; ++mp)
            buf_[static_cast<std::size_t>(mm) * n + mp] *= f;
    }
    ifft2(buf_.data());
    std::complex<double> sxp{0.0, 0.0};
    for (int i = 0; i < n; ++i)
        sxp += grid_.x(i) * std::complex<double>(0.0, -1.0 / grid_.kappa) *
               buf_[static_cast<std::size_t>(i) * n + i];
    m.cov_xp = 2.0 * sxp.real() / tr - 2.0 * m.mean_x * m.mean_p;
    return m;
}

double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
    if (!(a.grid == b.grid))
        throw AlignmentError("trace_distance: grid mismatch");
    const int n = a.grid.n;
    Eigen::MatrixXcd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            m(i, j) = a.rho[static_cast<std::size_t>(i) * n + j] -
                      b.rho[static_cast<std::size_t>(i) * n + j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
    return 0.5 * es.eigenvalues().cwiseAbs().sum() * a.grid.dx();
}

DensityMatrix ensemble_average(std::span<const GridState> states) {
    if (states.empty())
        throw DomainError("ensemble_average: empty ensemble");
    for (const auto& s : states)
        if (!(s.grid == states.front().grid))
            throw AlignmentError("ensemble_average: states live on different grids");
    DensityMatrix acc = DensityMatrix::pure(states.front());
    const int n = acc.grid.n;
    for (std::size_t t = 1; t < states.size(); ++t) {
        const auto& psi = states[t];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                acc.rho[static_cast<std::size_t>(i) * n + j] +=
                    psi.amp[i] * std::conj(psi.amp[j]);
    }
    const double inv = 1.0 / static_cast<double>(states.size());
    for (auto& v : acc.rho)
        v *= inv;
    return acc;
}

double compare_ensemble(std::span<const GridState> states, const DensityMatrix& reference) {
    return trace_distance(ensemble_average(states), reference);
}

PurityRate purity_rate_check(const GridState& state, double dt) {
    MasterEquationEngine me(state.grid, dt);
    SpectralWorkspace ws(state.grid.n);
    const Moments m = measure_moments(state, ws).moments;

    DensityMatrix rho = DensityMatrix::pure(state);
    const double p0 = rho.purity();
    me.step(rho);
    const double p1 = rho.purity();
    me.step(rho);
    const double p2 = rho.purity();

    PurityRate out;
    out.rate = std::max(jump_rate_formula(m, state.grid.kappa), 0.0);
    // One-sided second-order difference of Tr rho^2 at t = 0.
    out.purity_slope = -0.5 * (-3.0 * p0 + 4.0 * p1 - p2) / (2.0 * dt);
    return out;
}

} // namespace qbm
