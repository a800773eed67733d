#pragma once

#include <optional>

namespace qbm {

// Optional physical inputs. Everything downstream runs in dimensionless
// units; these exist only to report the unit scales and to derive kappa.
struct PhysicalInputs {
    double mass = 1.0;
    double temperature = 1.0; // environment temperature
    double friction = 1.0;    // gamma
    double hbar = 1.0;
    double k_boltzmann = 1.0; // configurable constant, defaults to 1
};

struct Scales {
    double time;     // T = 1/(2 gamma)
    double length;   // L = T * sqrt(kB T_env / m)
    double momentum; // P = sqrt(m kB T_env)
};

struct ModelParams {
    double kappa = 1.0;
    std::optional<PhysicalInputs> physical;

    static ModelParams dimensionless(double kappa);
    static ModelParams from_physical(const PhysicalInputs& in);
};

// kappa = kB T_env / (2 gamma hbar). Throws DomainError on non-positive input.
double kappa_from_physical(double mass, double temperature, double friction,
                           double hbar, double k_boltzmann = 1.0);

// Unit scales from the physical inputs. Throws DomainError in
// dimensionless-only mode (no physical inputs present).
Scales scales(const ModelParams& params);

// Phase-space summary of a wave packet. Dimensionless throughout.
struct Moments {
    double mean_x = 0.0;
    double mean_p = 0.0;
    double var_x = 1.0;
    double var_p = 1.0;
    double cov_xp = 0.0;
};

// 4 Vx Vp - (1/kappa^2 + Cxp^2); >= 0 for physical states, = 0 for pure
// Gaussians.
double heisenberg_defect(const Moments& m, double kappa);

} // namespace qbm
