#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qbm/engine.hpp"
#include "qbm/grid.hpp"

namespace qbm {

// Initial-state descriptor as accepted by the CLI:
//   pointer                      pointer state at (mean_x, mean_p)
//   gauss:vx,vp,cxp              Gaussian with the given widths (vp must
//                                match the purity identity)
//   superpos:<file>              JSON list of {weight, x, p} pointer-shaped
//                                packets
struct InitialStateSpec {
    enum class Kind { Pointer, Gauss, Superpos };
    Kind kind = Kind::Pointer;
    double mean_x = 0.0;
    double mean_p = 0.0;
    double var_x = 0.0, var_p = 0.0, cov_xp = 0.0; // Gauss
    std::vector<PacketInit> packets;               // Superpos
};

GridState build_initial_state(const InitialStateSpec& spec, const Grid& grid);

struct EnsembleConfig {
    int n_traj = 1;
    std::uint64_t master_seed = 1;
    double t_final = 1.0;
    double dt = 0.0; // 0 -> engine default
    int record_stride = 10;
    double kappa = 1.0;
    InitialStateSpec init{};
    int grid_n = 1024;
    double grid_sigmas = 24.0; // window width in pointer sigmas
    double window = 0.0;       // explicit full window width; 0 -> from sigmas
    bool recenter = true;
    bool corrector = true;
    bool bernoulli_jumps = false; // per-step Bernoulli instead of the clock
    bool keep_final_state = false;
    double rate_override = -1.0; // >= 0 forces the jump rate (test hook)
    // Odd-perturbation amplitude seeding the branch selection at each jump,
    // with a fair random sign (see NlpseEngine::apply_jump). Without it a
    // centered initial state sits on the unstable symmetric manifold and the
    // double-peak never collapses.
    double jump_tilt = 1e-2;
    // Deep jump bursts can push the per-step norm drift past its contract at
    // the configured dt; a failed trajectory is deterministically re-run at
    // dt/2 with doubled record stride (identical sample lattice) this many
    // times before it lands in the failure manifest.
    int retry_halvings = 2;
    int threads = 0; // 0 -> QBM_THREADS or hardware concurrency

    void validate() const;
    Grid make_grid() const;
};

struct TrajectoryRecord {
    std::uint64_t seed = 0;
    std::vector<double> times;
    std::vector<Moments> moments;
    std::vector<double> rates; // jump rate at the sample times
    std::vector<double> jump_times;
    std::optional<GridState> final_state;
};

TrajectoryRecord run_trajectory(const GridState& init, const EnsembleConfig& cfg,
                                std::uint64_t seed);

struct EnsembleResult {
    std::vector<TrajectoryRecord> records; // successes, in trajectory order
    struct Failure {
        int index;
        std::string what;
    };
    std::vector<Failure> failures;
};

// n_traj independent trajectories with seeds derived as
// split_seed(master_seed, i); results are independent of thread count and
// scheduling. Per-trajectory failures are collected, not fatal.
EnsembleResult run_ensemble(const EnsembleConfig& cfg);

int resolve_threads(int requested);

} // namespace qbm
