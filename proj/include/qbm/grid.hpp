#pragma once

#include <complex>
#include <memory>
#include <span>
#include <vector>

#include "qbm/model.hpp"

namespace qbm {

// Uniform spatial grid with its kappa-scaled momentum dual. The momentum
// operator convention is <x|p|psi> = -(i/kappa) d_x psi, so a plane wave
// exp(i kappa p x) carries momentum p and the dual spacing is
// dp = 2 pi / (kappa * width).
struct Grid {
    int n = 0; // power of two
    double x_min = 0.0;
    double x_max = 0.0;
    double kappa = 1.0;

    double width() const { return x_max - x_min; }
    double dx() const { return width() / n; }
    double x(int i) const { return x_min + i * dx(); }
    double center() const { return 0.5 * (x_min + x_max); }
    double dp() const { return 2.0 * M_PI / (kappa * width()); }
    // FFT-ordered momentum value of bin m.
    double p(int m) const { return (m < n / 2 ? m : m - n) * dp(); }
    double p_max() const { return 0.5 * n * dp(); } // band edge

    // Window of the given half-width centered on `center`.
    static Grid spanning(double kappa, double center, double half_width, int n);
    // Default production window: `sigmas` pointer standard deviations wide.
    static Grid pointer_default(double kappa, int n = 1024, double sigmas = 24.0);
};

bool operator==(const Grid& a, const Grid& b);

// FFTW plans for one transform size. Creation is serialized internally
// (FFTW planning is not thread-safe); execution on distinct instances is.
// Not copyable; one per engine / thread.
class SpectralWorkspace {
public:
    explicit SpectralWorkspace(int n);
    ~SpectralWorkspace();
    SpectralWorkspace(const SpectralWorkspace&) = delete;
    SpectralWorkspace& operator=(const SpectralWorkspace&) = delete;

    int size() const { return n_; }
    // In-place unscaled DFT (forward: e^{-2pi i jk/n} kernel).
    void forward(std::complex<double>* a);
    void backward(std::complex<double>* a);

private:
    int n_;
    void* plan_fwd_;
    void* plan_bwd_;
};

struct GridState {
    Grid grid;
    std::vector<std::complex<double>> amp;

    double norm2() const; // integral of |psi|^2
    double norm() const;
    void renormalize();
    // max(edge amplitude) / max amplitude; periodic-boundary leakage monitor.
    double edge_ratio() const;
    bool edge_leakage(double tol = 1e-8) const { return edge_ratio() > tol; }
};

// Normalized Gaussian packet of the pointer-state functional form
//   psi(x) ~ exp(-(x-x0)^2/(4 Vx) (1 - i kappa Cxp) + i kappa (x-x0) p0),
// with Vp implied by the purity identity. Checks that the packet fits the
// position window and the momentum band (throws ResolutionError otherwise).
GridState gaussian_state(const Grid& grid, double mean_x, double mean_p,
                         double var_x, double cov_xp);

struct PacketInit {
    double weight = 1.0; // |amplitude|^2, weights need not be pre-normalized
    double mean_x = 0.0;
    double mean_p = 0.0;
    double var_x = 1.0;
    double cov_xp = 0.0;
};

// Superposition sum_j sqrt(w_j) psi_j, renormalized on the grid.
GridState superposition_state(const Grid& grid, std::span<const PacketInit> packets);

struct MomentReading {
    Moments moments;
    bool tainted = false; // set when the edge-leakage monitor fired
};

// Position moments by real-space quadrature, momentum moments in the
// Fourier dual, covariance via the symmetrized mixed quadrature
// <{x,p}> - 2 <x><p>.
MomentReading measure_moments(const GridState& state, SpectralWorkspace& ws);

// Momentum-space norm (Parseval partner of GridState::norm2).
double momentum_norm2(const GridState& state, SpectralWorkspace& ws);

} // namespace qbm
