#pragma once

#include <complex>
#include <span>
#include <vector>

#include "qbm/grid.hpp"
#include "qbm/model.hpp"

namespace qbm {

// Position-representation density matrix on a coarse grid (n <= 256; this
// module is an oracle, not a production path). rho[i*n+j] = rho(x_i, x_j),
// trace convention sum_i rho_ii dx = 1.
struct DensityMatrix {
    Grid grid;
    std::vector<std::complex<double>> rho;

    static DensityMatrix pure(const GridState& psi);

    double trace() const;
    double purity() const; // Tr rho^2 = dx^2 sum |rho_ij|^2
    void rescale_trace();
    double hermiticity_defect() const;  // max |rho - rho^dagger| / max |rho|
    double min_eigenvalue() const;      // monitored, not enforced
};

// Split-step integrator for
//   drho/dt = -i k/2 [p^2, rho] - i k/2 [x, {p, rho}]
//             - k^2 [x,[x,rho]] - 1/16 [p,[p,rho]].
// The double-commutator dissipators are exact exponentials in their diagonal
// bases (pointwise in (x,x') and, via the 2-D Fourier transform, in (k,k'));
// the unitary kinetic factor rides along in the momentum basis and the
// friction advection is integrated by an explicit short-time (RK4) expansion
// with spectral derivatives. Strang ordering; trace renormalized per step.
class MasterEquationEngine {
public:
    explicit MasterEquationEngine(const Grid& grid, double dt = 0.0);
    ~MasterEquationEngine();
    MasterEquationEngine(const MasterEquationEngine&) = delete;
    MasterEquationEngine& operator=(const MasterEquationEngine&) = delete;

    double dt() const { return dt_; }
    static double max_stable_dt(int n); // friction CFL, documented empirically

    void step(DensityMatrix& rho);
    // Hermiticity defect observed after the last step (window-truncation
    // monitor; stays at roundoff while the state fits the window).
    double last_hermiticity_defect() const { return last_hermiticity_defect_; }

    // First and second moments of x and p plus the symmetrized covariance.
    Moments moments(const DensityMatrix& rho);

private:
    void fft2(std::complex<double>* a);
    void ifft2(std::complex<double>* a); // includes the 1/n^2 scale
    void friction_rhs(const std::vector<std::complex<double>>& in,
                      std::vector<std::complex<double>>& out);
    void apply_momentum_factor(std::vector<std::complex<double>>& rho, double tau);

    Grid grid_;
    double dt_;
    double last_hermiticity_defect_ = 0.0;
    void* plan_fwd_;
    void* plan_bwd_;
    std::vector<std::complex<double>> buf_, k1_, k2_, k3_, stage_;
};

// (1/2) || a - b ||_1 via the eigenvalues of the Hermitian difference.
double trace_distance(const DensityMatrix& a, const DensityMatrix& b);

// rho_MC = (1/N) sum |psi_i><psi_i|; all states must share one grid.
DensityMatrix ensemble_average(std::span<const GridState> states);

double compare_ensemble(std::span<const GridState> states, const DensityMatrix& reference);

} // namespace qbm
