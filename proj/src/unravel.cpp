#include "qbm/unravel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "qbm/errors.hpp"
#include "qbm/gaussian.hpp"
#include "qbm/rng.hpp"

namespace qbm {

GridState build_initial_state(const InitialStateSpec& spec, const Grid& grid) {
    const PointerStateSpec ps = pointer_fixed_point(grid.kappa);
    switch (spec.kind) {
    case InitialStateSpec::Kind::Pointer:
        return gaussian_state(grid, spec.mean_x, spec.mean_p, ps.var_x, ps.cov_xp);
    case InitialStateSpec::Kind::Gauss: {
        if (!(spec.var_x > 0.0) || !(spec.var_p > 0.0))
            throw DomainError("init gauss: variances must be positive");
        // A pure Gaussian fixes Vp through the purity identity; reject
        // inconsistent triples instead of silently reinterpreting them.
        const double implied =
            (1.0 / (grid.kappa * grid.kappa) + spec.cov_xp * spec.cov_xp) /
            (4.0 * spec.var_x);
        if (std::abs(spec.var_p - implied) > 1e-6 * implied)
            throw DomainError("init gauss: vp inconsistent with the pure-state identity 4 Vx Vp = 1/kappa^2 + Cxp^2");
        return gaussian_state(grid, spec.mean_x, spec.mean_p, spec.var_x, spec.cov_xp);
    }
    case InitialStateSpec::Kind::Superpos: {
        if (spec.packets.empty())
            throw DomainError("init superpos: no packets given");
        std::vector<PacketInit> packets = spec.packets;
        for (auto& p : packets) {
            if (p.var_x <= 0.0) { // unset -> pointer-shaped
                p.var_x = ps.var_x;
                p.cov_xp = ps.cov_xp;
            }
        }
        return superposition_state(grid, packets);
    }
    }
    throw DomainError("init: unknown kind");
}

void EnsembleConfig::validate() const {
    if (n_traj < 1)
        throw DomainError("EnsembleConfig: n_traj must be >= 1");
    if (record_stride < 1)
        throw DomainError("EnsembleConfig: record_stride must be >= 1");
    if (!(kappa > 0.0))
        throw DomainError("EnsembleConfig: kappa must be positive");
    if (!(t_final >= 0.0))
        throw DomainError("EnsembleConfig: t_final must be >= 0");
}

Grid EnsembleConfig::make_grid() const {
    if (window > 0.0)
        return Grid::spanning(kappa, 0.0, 0.5 * window, grid_n);
    double half = 0.5 * grid_sigmas * std::sqrt(pointer_fixed_point(kappa).var_x);
    // A superposition needs the window to hold all packets plus margins.
    if (init.kind == InitialStateSpec::Kind::Superpos) {
        double extent = 0.0;
        for (const auto& p : init.packets)
            extent = std::max(extent, std::abs(p.mean_x));
        half += extent;
    }
    return Grid::spanning(kappa, 0.0, half, grid_n);
}

TrajectoryRecord run_trajectory(const GridState& init, const EnsembleConfig& cfg,
                                std::uint64_t seed) {
    cfg.validate();
    EngineOptions opt;
    opt.dt = cfg.dt;
    opt.recenter = cfg.recenter;
    opt.corrector = cfg.corrector;
    NlpseEngine engine(init.grid.n, cfg.kappa, opt);
    const double dt = engine.dt();
    const long n_steps = std::lround(cfg.t_final / dt);

    GridState state = init;
    Rng rng(seed);

    TrajectoryRecord rec;
    rec.seed = seed;

    auto rate_of = [&](const Moments& m) {
        if (cfg.rate_override >= 0.0)
            return cfg.rate_override;
        return std::max(jump_rate_formula(m, cfg.kappa), 0.0);
    };

    MomentReading reading = engine.measure(state);
    double r_prev = rate_of(reading.moments);
    rec.times.push_back(0.0);
    rec.moments.push_back(reading.moments);
    rec.rates.push_back(r_prev);

    double hazard = 0.0;
    double threshold = rng.exponential();

    for (long k = 0; k < n_steps; ++k) {
        const double t = (k + 1) * dt;
        engine.step(state);
        reading = engine.measure(state);
        double r_cur = rate_of(reading.moments);

        bool jump = false;
        if (cfg.bernoulli_jumps) {
            jump = rng.uniform() < r_cur * dt;
        } else {
            // Exponential clock on the trapezoid-accumulated hazard.
            hazard += 0.5 * (r_prev + r_cur) * dt;
            jump = hazard >= threshold;
        }
        if (jump && r_cur > 0.0) {
            const double tilt = cfg.jump_tilt * (rng.coin() ? 1.0 : -1.0);
            engine.apply_jump(state, tilt);
            rec.jump_times.push_back(t);
            hazard = 0.0;
            threshold = rng.exponential();
            reading = engine.measure(state);
            r_cur = rate_of(reading.moments);
        }
        r_prev = r_cur;

        if ((k + 1) % cfg.record_stride == 0 || k + 1 == n_steps) {
            rec.times.push_back(t);
            rec.moments.push_back(reading.moments);
            rec.rates.push_back(r_cur);
        }
    }
    if (cfg.keep_final_state)
        rec.final_state = std::move(state);
    return rec;
}

int resolve_threads(int requested) {
    if (requested > 0)
        return requested;
    if (const char* env = std::getenv("QBM_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0)
            return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

EnsembleResult run_ensemble(const EnsembleConfig& cfg) {
    cfg.validate();
    const Grid grid = cfg.make_grid();
    const GridState init = build_initial_state(cfg.init, grid);

    std::vector<std::optional<TrajectoryRecord>> slots(cfg.n_traj);
    EnsembleResult result;
    std::mutex failures_mutex;
    std::atomic<int> next{0};

    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= cfg.n_traj)
                return;
            EnsembleConfig attempt = cfg;
            if (attempt.dt == 0.0)
                attempt.dt = NlpseEngine::default_dt(cfg.kappa);
            std::string last_error;
            for (int retry = 0; retry <= cfg.retry_halvings; ++retry) {
                try {
                    slots[i] = run_trajectory(init, attempt,
                                              split_seed(cfg.master_seed, i));
                    last_error.clear();
                    break;
                } catch (const StepSizeError& e) {
                    last_error = e.what();
                    attempt.dt *= 0.5;
                    attempt.record_stride *= 2;
                } catch (const std::exception& e) {
                    last_error = e.what();
                    break;
                }
            }
            if (!last_error.empty()) {
                std::lock_guard<std::mutex> lock(failures_mutex);
                result.failures.push_back(
                    {i, "trajectory " + std::to_string(i) + ": " + last_error});
            }
        }
    };

    const int n_threads = std::min(resolve_threads(cfg.threads), cfg.n_traj);
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }

    for (auto& s : slots)
        if (s)
            result.records.push_back(std::move(*s));
    return result;
}

} // namespace qbm
