#include "qbm/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qbm/errors.hpp"
#include "qbm/gaussian.hpp"
#include "qbm/rng.hpp"

namespace qbm {

void PacketEnsemble::validate(double kappa, double separation_threshold) const {
    if (packets.empty() || packets.size() != weights.size())
        throw DomainError("PacketEnsemble: packets and weights must be non-empty and aligned");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0))
            throw DomainError("PacketEnsemble: weights must be nonnegative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw DomainError("PacketEnsemble: weights must sum to one");
    for (const auto& m : packets)
        if (!(m.var_x > 0.0) || !(m.var_p > 0.0))
            throw DomainError("PacketEnsemble: packet variances must be positive");
    if (separation_threshold > 0.0 && packets.size() > 1 &&
        separation_certificate(*this, kappa) < separation_threshold)
        throw DomainError("PacketEnsemble: packets too close for the orthogonality assumption");
}

double separation_certificate(const PacketEnsemble& ens, double kappa) {
    const double k2 = kappa * kappa;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < ens.size(); ++j)
        for (std::size_t k = j + 1; k < ens.size(); ++k) {
            const double dx = ens.packets[j].mean_x - ens.packets[k].mean_x;
            const double dp = ens.packets[j].mean_p - ens.packets[k].mean_p;
            best = std::min(best, 2.0 * k2 * dx * dx + dp * dp / 8.0);
        }
    return best;
}

double default_separation_threshold(double kappa) {
    return 18.0 * pointer_fixed_point(kappa).var_p; // 12 sigma_p, see header
}

Moments composite_moments(const PacketEnsemble& ens) {
    Moments m{0.0, 0.0, 0.0, 0.0, 0.0};
    for (std::size_t j = 0; j < ens.size(); ++j) {
        const double w = ens.weights[j];
        m.mean_x += w * ens.packets[j].mean_x;
        m.mean_p += w * ens.packets[j].mean_p;
        m.var_x += w * ens.packets[j].var_x;
        m.var_p += w * ens.packets[j].var_p;
        m.cov_xp += w * ens.packets[j].cov_xp;
    }
    for (std::size_t j = 0; j < ens.size(); ++j)
        for (std::size_t k = 0; k < ens.size(); ++k) {
            const double w = ens.weights[j] * ens.weights[k];
            const double dx = ens.packets[j].mean_x - ens.packets[k].mean_x;
            const double dp = ens.packets[j].mean_p - ens.packets[k].mean_p;
            m.var_x += 0.5 * w * dx * dx;
            m.var_p += 0.5 * w * dp * dp;
            m.cov_xp += w * dx * dp;
        }
    return m;
}

double packet_jump_norm(const PacketEnsemble& ens, const Moments& composite,
                        std::size_t j, double kappa) {
    const double k2 = kappa * kappa;
    const double dx = composite.mean_x - ens.packets[j].mean_x;
    const double dp = composite.mean_p - ens.packets[j].mean_p;
    return 2.0 * k2 * (ens.packets[j].var_x + dx * dx) +
           (ens.packets[j].var_p + dp * dp) / 8.0 - 0.5;
}

std::vector<double> weight_flow(const PacketEnsemble& ens, double kappa) {
    const Moments c = composite_moments(ens);
    const double k2 = kappa * kappa;
    std::vector<double> d(ens.size());
    for (std::size_t j = 0; j < ens.size(); ++j) {
        const double dx = c.mean_x - ens.packets[j].mean_x;
        const double dp = c.mean_p - ens.packets[j].mean_p;
        d[j] = ens.weights[j] *
               (2.0 * k2 * (c.var_x - ens.packets[j].var_x - dx * dx) +
                (c.var_p - ens.packets[j].var_p - dp * dp) / 8.0);
    }
    return d;
}

PacketEnsemble jump_reshuffle(const PacketEnsemble& ens, double kappa) {
    const Moments c = composite_moments(ens);
    // Composite rate; equals the weighted sum of the packet norms.
    const double r = 2.0 * kappa * kappa * c.var_x + c.var_p / 8.0 - 0.5;
    if (!(r > 0.0))
        throw DomainError("jump_reshuffle: composite jump rate is not positive");
    PacketEnsemble out = ens;
    double sum = 0.0;
    for (std::size_t j = 0; j < ens.size(); ++j) {
        out.weights[j] = ens.weights[j] * packet_jump_norm(ens, c, j, kappa) / r;
        sum += out.weights[j];
    }
    for (auto& w : out.weights)
        w /= sum;
    return out;
}

WeightProcessResult run_weight_process(const PacketEnsemble& ens0, double kappa,
                                       double t_final, std::uint64_t seed,
                                       WeightProcessOptions opt) {
    const double threshold = opt.separation_threshold < 0.0
                                 ? default_separation_threshold(kappa)
                                 : opt.separation_threshold;
    ens0.validate(kappa, threshold);
    if (!(t_final >= 0.0))
        throw DomainError("run_weight_process: t_final must be >= 0");

    PacketEnsemble ens = ens0;
    const std::size_t n = ens.size();

    // dt small against the fastest reshuffle scale, bounded by the largest
    // packet norm at t = 0 (separations only shrink the composite later).
    double dt = opt.dt;
    if (dt == 0.0) {
        Moments c = composite_moments(ens);
        double rmax = 1e-12;
        for (std::size_t j = 0; j < n; ++j)
            rmax = std::max(rmax, packet_jump_norm(ens, c, j, kappa));
        dt = std::min(1e-3, 0.05 / rmax);
    }

    Rng rng(seed);
    WeightProcessResult res;
    res.times.push_back(0.0);
    res.weights.push_back(ens.weights);

    double hazard = 0.0;
    double clock_threshold = rng.exponential();
    const long n_steps = std::lround(t_final / dt);
    std::vector<double> norms(n);

    auto absorbed = [&](double t) {
        for (std::size_t j = 0; j < n; ++j)
            if (ens.weights[j] > 1.0 - opt.eps_abs) {
                res.survivor = static_cast<int>(j);
                res.absorption_time = t;
                return true;
            }
        return false;
    };

    double r_prev = 0.0;
    {
        Moments c = composite_moments(ens);
        for (std::size_t j = 0; j < n; ++j)
            norms[j] = packet_jump_norm(ens, c, j, kappa);
        for (std::size_t j = 0; j < n; ++j)
            r_prev += ens.weights[j] * norms[j];
    }

    if (absorbed(0.0))
        return res;

    for (long k = 0; k < n_steps; ++k) {
        const double t = (k + 1) * dt;
        const Moments c = composite_moments(ens);
        double r = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            norms[j] = packet_jump_norm(ens, c, j, kappa);
            r += ens.weights[j] * norms[j];
        }

        // Euler drift; conserves sum w exactly up to roundoff.
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            ens.weights[j] += dt * ens.weights[j] * (r - norms[j]);
            if (ens.weights[j] < 0.0) {
                if (ens.weights[j] < -1e-9)
                    throw StepSizeError("run_weight_process: weight left [0,1]; reduce dt");
                ens.weights[j] = 0.0;
            }
            sum += ens.weights[j];
        }
        if (sum > 1.0 + 1e-9 || sum < 1.0 - 1e-9)
            throw StepSizeError("run_weight_process: simplex drift; reduce dt");
        for (auto& w : ens.weights)
            w /= sum;

        // Damped drift of the packet means (exact map of dx = p dt, dp = -p dt).
        for (auto& pk : ens.packets) {
            const double p_old = pk.mean_p;
            pk.mean_p *= std::exp(-dt);
            pk.mean_x += p_old * (1.0 - std::exp(-dt));
        }

        hazard += 0.5 * (r_prev + r) * dt;
        r_prev = r;
        if (hazard >= clock_threshold && r > 0.0) {
            const Moments cj = composite_moments(ens);
            double rj = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                norms[j] = packet_jump_norm(ens, cj, j, kappa);
                rj += ens.weights[j] * norms[j];
            }
            double sum2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                ens.weights[j] *= norms[j] / rj;
                sum2 += ens.weights[j];
            }
            for (auto& w : ens.weights)
                w /= sum2;
            res.jump_times.push_back(t);
            hazard = 0.0;
            clock_threshold = rng.exponential();
        }

        if ((k + 1) % opt.record_stride == 0 || k + 1 == n_steps) {
            res.times.push_back(t);
            res.weights.push_back(ens.weights);
        }
        if (absorbed(t)) {
            if (res.times.back() != t) {
                res.times.push_back(t);
                res.weights.push_back(ens.weights);
            }
            break;
        }
    }
    return res;
}

} // namespace qbm
