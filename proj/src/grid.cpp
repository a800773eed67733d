#include "qbm/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

#include "qbm/errors.hpp"
#include "qbm/gaussian.hpp"

namespace qbm {

namespace {

std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

} // namespace

Grid Grid::spanning(double kappa, double center, double half_width, int n) {
    if (!power_of_two(n))
        throw DomainError("Grid: n must be a power of two");
    if (!(kappa > 0.0) || !(half_width > 0.0))
        throw DomainError("Grid: kappa and half_width must be positive");
    return Grid{n, center - half_width, center + half_width, kappa};
}

Grid Grid::pointer_default(double kappa, int n, double sigmas) {
    const double sigma_x = std::sqrt(pointer_fixed_point(kappa).var_x);
    return spanning(kappa, 0.0, 0.5 * sigmas * sigma_x, n);
}

bool operator==(const Grid& a, const Grid& b) {
    return a.n == b.n && a.x_min == b.x_min && a.x_max == b.x_max &&
           a.kappa == b.kappa;
}

SpectralWorkspace::SpectralWorkspace(int n) : n_(n) {
    if (!power_of_two(n))
        throw DomainError("SpectralWorkspace: n must be a power of two");
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    // FFTW_UNALIGNED lets the plans run directly on std::vector storage.
    std::vector<std::complex<double>> tmp(n);
    auto* ptr = reinterpret_cast<fftw_complex*>(tmp.data());
    plan_fwd_ = fftw_plan_dft_1d(n, ptr, ptr, FFTW_FORWARD,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
    plan_bwd_ = fftw_plan_dft_1d(n, ptr, ptr, FFTW_BACKWARD,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
}

SpectralWorkspace::~SpectralWorkspace() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
    fftw_destroy_plan(static_cast<fftw_plan>(plan_bwd_));
}

void SpectralWorkspace::forward(std::complex<double>* a) {
    auto* ptr = reinterpret_cast<fftw_complex*>(a);
    fftw_execute_dft(static_cast<fftw_plan>(plan_fwd_), ptr, ptr);
}

void SpectralWorkspace::backward(std::complex<double>* a) {
    auto* ptr = reinterpret_cast<fftw_complex*>(a);
    fftw_execute_dft(static_cast<fftw_plan>(plan_bwd_), ptr, ptr);
}

double GridState::norm2() const {
    double s = 0.0;
    for (const auto& a : amp)
        s += std::norm(a);
    return s * grid.dx();
}

double GridState::norm() const { return std::sqrt(norm2()); }

void GridState::renormalize() {
    const double n = norm();
    if (!(n > 0.0) || !std::isfinite(n))
        throw NumericalError("GridState: cannot renormalize a null or non-finite state");
    const double inv = 1.0 / n;
    for (auto& a : amp)
        a *= inv;
}

double GridState::edge_ratio() const {
    double peak = 0.0;
    for (const auto& a : amp)
        peak = std::max(peak, std::abs(a));
    if (peak == 0.0)
        return 0.0;
    return std::max(std::abs(amp.front()), std::abs(amp.back())) / peak;
}

GridState gaussian_state(const Grid& grid, double mean_x, double mean_p,
                         double var_x, double cov_xp) {
    if (!(var_x > 0.0))
        throw DomainError("gaussian_state: var_x must be positive");
    const double sigma_x = std::sqrt(var_x);
    if (mean_x - 4.0 * sigma_x < grid.x_min || mean_x + 4.0 * sigma_x > grid.x_max)
        throw ResolutionError("gaussian_state: packet does not fit the position window");
    // Momentum content must fit the band: center kappa*p0 plus the Gaussian
    // spectral width. |psi_hat|^2 has variance Vp, so require ~6 sigma_p.
    const double var_p =
        (1.0 / (grid.kappa * grid.kappa) + cov_xp * cov_xp) / (4.0 * var_x);
    if (std::abs(mean_p) + 6.0 * std::sqrt(var_p) > grid.p_max())
        throw ResolutionError("gaussian_state: packet does not fit the momentum band");

    GridState st;
    st.grid = grid;
    st.amp.resize(grid.n);
    const std::complex<double> shape(1.0, -grid.kappa * cov_xp);
    for (int i = 0; i < grid.n; ++i) {
        const double u = grid.x(i) - mean_x;
        const std::complex<double> arg =
            -u * u / (4.0 * var_x) * shape +
            std::complex<double>(0.0, grid.kappa * u * mean_p);
        st.amp[i] = std::exp(arg);
    }
    st.renormalize();
    return st;
}

GridState superposition_state(const Grid& grid, std::span<const PacketInit> packets) {
    if (packets.empty())
        throw DomainError("superposition_state: need at least one packet");
    GridState st;
    st.grid = grid;
    st.amp.assign(grid.n, 0.0);
    for (const auto& pk : packets) {
        if (!(pk.weight >= 0.0))
            throw DomainError("superposition_state: weights must be nonnegative");
        GridState part = gaussian_state(grid, pk.mean_x, pk.mean_p, pk.var_x, pk.cov_xp);
        const double c = std::sqrt(pk.weight);
        for (int i = 0; i < grid.n; ++i)
            st.amp[i] += c * part.amp[i];
    }
    st.renormalize();
    return st;
}

MomentReading measure_moments(const GridState& state, SpectralWorkspace& ws) {
    const Grid& g = state.grid;
    if (ws.size() != g.n)
        throw AlignmentError("measure_moments: workspace size mismatch");
    const double dx = g.dx();

    double n2 = 0.0, sx = 0.0, sxx = 0.0;
    for (int i = 0; i < g.n; ++i) {
        const double w = std::norm(state.amp[i]);
        n2 += w;
        sx += w * g.x(i);
        sxx += w * g.x(i) * g.x(i);
    }
    n2 *= dx;
    sx *= dx;
    sxx *= dx;

    Moments m;
    m.mean_x = sx / n2;
    m.var_x = sxx / n2 - m.mean_x * m.mean_x;

    // Momentum-space quadratures.
    std::vector<std::complex<double>> hat(state.amp);
    ws.forward(hat.data());
    double np = 0.0, sp = 0.0, spp = 0.0;
    for (int mth = 0; mth < g.n; ++mth) {
        const double w = std::norm(hat[mth]);
        const double p = g.p(mth);
        np += w;
        sp += w * p;
        spp += w * p * p;
    }
    m.mean_p = sp / np;
    m.var_p = spp / np - m.mean_p * m.mean_p;

    // <{x,p}> = 2 Re <psi| x (p psi)>.
    for (int mth = 0; mth < g.n; ++mth)
        hat[mth] *= g.p(mth);
    ws.backward(hat.data());
    const double inv_n = 1.0 / g.n;
    double sxp = 0.0;
    for (int i = 0; i < g.n; ++i) {
        const std::complex<double> ppsi = hat[i] * inv_n;
        sxp += g.x(i) * (std::conj(state.amp[i]) * ppsi).real();
    }
    sxp *= 2.0 * dx;
    m.cov_xp = sxp / n2 - 2.0 * m.mean_x * m.mean_p;

    MomentReading r;
    r.moments = m;
    r.tainted = state.edge_leakage();
    return r;
}

double momentum_norm2(const GridState& state, SpectralWorkspace& ws) {
    std::vector<std::complex<double>> hat(state.amp);
    ws.forward(hat.data());
    double s = 0.0;
    for (const auto& a : hat)
        s += std::norm(a);
    // dx^2 kappa/(2 pi) per transform normalization, times dp per bin.
    const double dx = state.grid.dx();
    return s * dx * dx * state.grid.kappa / (2.0 * M_PI) * state.grid.dp();
}

} // namespace qbm
