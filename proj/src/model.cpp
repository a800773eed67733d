#include "qbm/model.hpp"

#include <cmath>

#include "qbm/errors.hpp"

namespace qbm {

ModelParams ModelParams::dimensionless(double kappa) {
    if (!(kappa > 0.0))
        throw DomainError("kappa must be positive");
    ModelParams p;
    p.kappa = kappa;
    return p;
}

ModelParams ModelParams::from_physical(const PhysicalInputs& in) {
    ModelParams p;
    p.kappa = kappa_from_physical(in.mass, in.temperature, in.friction, in.hbar,
                                  in.k_boltzmann);
    p.physical = in;
    return p;
}

double kappa_from_physical(double mass, double temperature, double friction,
                           double hbar, double k_boltzmann) {
    if (!(mass > 0.0) || !(temperature > 0.0) || !(friction > 0.0) ||
        !(hbar > 0.0) || !(k_boltzmann > 0.0))
        throw DomainError("physical inputs must all be positive");
    return k_boltzmann * temperature / (2.0 * friction * hbar);
}

Scales scales(const ModelParams& params) {
    if (!params.physical)
        throw DomainError("dimensionless-only mode: no physical inputs to derive scales from");
    const PhysicalInputs& in = *params.physical;
    if (!(in.mass > 0.0) || !(in.temperature > 0.0) || !(in.friction > 0.0))
        throw DomainError("physical inputs must all be positive");
    Scales s;
    s.time = 1.0 / (2.0 * in.friction);
    s.length = s.time * std::sqrt(in.k_boltzmann * in.temperature / in.mass);
    s.momentum = std::sqrt(in.mass * in.k_boltzmann * in.temperature);
    return s;
}

double heisenberg_defect(const Moments& m, double kappa) {
    return 4.0 * m.var_x * m.var_p -
           (1.0 / (kappa * kappa) + m.cov_xp * m.cov_xp);
}

} // namespace qbm
