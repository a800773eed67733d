#pragma once

#include <cstdint>
#include <vector>

#include "qbm/model.hpp"

namespace qbm {

// Superposition of separated, localized packets reduced to per-packet
// moments and weights. Weights sum to one; packet shapes are frozen during
// the reduced process (pointer-shaped unless configured otherwise).
struct PacketEnsemble {
    std::vector<Moments> packets;
    std::vector<double> weights;

    std::size_t size() const { return packets.size(); }
    // Throws DomainError unless weights are a probability vector and the
    // separation certificate clears the threshold (pass 0 to skip).
    void validate(double kappa, double separation_threshold) const;
};

// min over pairs of 2 k^2 dx^2 + dp^2 / 8 — the phase-space separation that
// stands in for the orthogonality requirement on the packets.
double separation_certificate(const PacketEnsemble& ens, double kappa);

// Certificate value of packets 12 pointer sigmas apart in the weaker
// (momentum) direction; the default orthogonality threshold.
double default_separation_threshold(double kappa);

// Moments of the full superposition from the per-packet decomposition
// (weighted means plus the pairwise-difference variance formulas).
Moments composite_moments(const PacketEnsemble& ens);

// <J^dag J>_j = 2 k^2 (Vx_j + (x - x_j)^2) + (Vp_j + (p - p_j)^2)/8 - 1/2
// with (x, p) the composite means.
double packet_jump_norm(const PacketEnsemble& ens, const Moments& composite,
                        std::size_t j, double kappa);

// Deterministic weight flow
//   dw_j/dt = w_j (2 k^2 (Vx - Vx_j - (x-x_j)^2) + (Vp - Vp_j - (p-p_j)^2)/8);
// sums to zero across packets.
std::vector<double> weight_flow(const PacketEnsemble& ens, double kappa);

// Jump reshuffle w_j' = w_j <J^dag J>_j / <J^dag J>; packet moments carry
// over unchanged. Throws DomainError if the composite rate is not positive.
PacketEnsemble jump_reshuffle(const PacketEnsemble& ens, double kappa);

struct WeightProcessOptions {
    double dt = 0.0;          // 0 -> auto from the fastest rate scale
    double eps_abs = 1e-6;    // absorb when max w > 1 - eps_abs
    int record_stride = 100;
    double separation_threshold = -1.0; // < 0 -> default_separation_threshold
};

struct WeightProcessResult {
    std::vector<double> times;
    std::vector<std::vector<double>> weights; // one row per sample
    std::vector<double> jump_times;
    int survivor = -1;             // absorbing index, -1 if not absorbed
    double absorption_time = -1.0; // -1 if not absorbed
};

// Euler drift plus exponential-clock Poisson reshuffles for
//   dw_j = w_j (<JJ> - <JJ>_j) dt + w_j (<JJ>_j / <JJ> - 1) dN,
// packet means following (dx_j = p_j dt, dp_j = -p_j dt). Terminates early
// at absorption and reports the surviving index.
WeightProcessResult run_weight_process(const PacketEnsemble& ens0, double kappa,
                                       double t_final, std::uint64_t seed,
                                       WeightProcessOptions opt = {});

} // namespace qbm
