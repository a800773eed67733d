#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qbm/jump_model.hpp"
#include "qbm/unravel.hpp"

namespace qbm {

// Bessel-corrected sample statistics of the trajectory first moments.
struct SampleStats {
    double mean_x, mean_p, var_x, var_p, cov_xp;
    long n;
};

// Statistics of the ensemble at time t; every record must carry a sample at
// t (AlignmentError otherwise), and N >= 2.
SampleStats sample_statistics(std::span<const TrajectoryRecord> records, double t);

struct StatSeries {
    std::vector<double> times;
    std::vector<SampleStats> stats;
};

StatSeries build_stat_series(std::span<const TrajectoryRecord> records);

struct FitOptions {
    double t_min = 0.0;
    double t_max = 5.0;
    int bootstrap = 200;
    std::uint64_t seed = 0x51c0ffee;
};

struct FitResult {
    DiffusionConstants constants; // source = Fitted, sigma from the bootstrap
    double rms_var_p = 0.0;
    double rms_cov_xp = 0.0;
    double rms_var_x = 0.0;
};

// Consecutive one-parameter least squares against the closed-form moment
// curves: D_p from Var_N[p], then D_xp from Cov_N[x,p], then D_x from
// Var_N[x], each fit reusing the previously fixed constants. All three fits
// are linear in their unknown and solved in closed form.
DiffusionConstants fit_series(const StatSeries& series, const FitOptions& opt,
                              FitResult* detail = nullptr);

// fit_series plus bootstrap (trajectory resampling) uncertainties.
FitResult fit_diffusion(std::span<const TrajectoryRecord> records,
                        const FitOptions& opt = {});

struct Coverage {
    double t;
    double frac_x; // fraction within +-1 predicted sd of the ensemble mean
    double frac_p;
};

// One-standard-deviation coverage against the OU prediction with the given
// diffusion constants; the reference mean is the deterministic drift from
// (x0, p0).
std::vector<Coverage> coverage_check(std::span<const TrajectoryRecord> records,
                                     std::span<const double> times,
                                     const DiffusionConstants& d, double x0,
                                     double p0);

} // namespace qbm
