#include "qbm/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "qbm/errors.hpp"
#include "qbm/ou.hpp"
#include "qbm/rng.hpp"

namespace qbm {

namespace {

constexpr double kTimeTol = 1e-9;

long find_time_index(const TrajectoryRecord& rec, double t) {
    auto it = std::lower_bound(rec.times.begin(), rec.times.end(), t - kTimeTol);
    if (it == rec.times.end() || std::abs(*it - t) > kTimeTol)
        return -1;
    return it - rec.times.begin();
}

SampleStats stats_at_index(std::span<const TrajectoryRecord> records,
                           std::span<const long> idx) {
    const long n = static_cast<long>(records.size());
    double sx = 0.0, sp = 0.0;
    for (long i = 0; i < n; ++i) {
        sx += records[i].moments[idx[i]].mean_x;
        sp += records[i].moments[idx[i]].mean_p;
    }
    SampleStats s{};
    s.n = n;
    s.mean_x = sx / n;
    s.mean_p = sp / n;
    double vx = 0.0, vp = 0.0, c = 0.0;
    for (long i = 0; i < n; ++i) {
        const double dx = records[i].moments[idx[i]].mean_x - s.mean_x;
        const double dp = records[i].moments[idx[i]].mean_p - s.mean_p;
        vx += dx * dx;
        vp += dp * dp;
        c += dx * dp;
    }
    s.var_x = vx / (n - 1);
    s.var_p = vp / (n - 1);
    s.cov_xp = c / (n - 1);
    return s;
}

} // namespace

SampleStats sample_statistics(std::span<const TrajectoryRecord> records, double t) {
    if (records.size() < 2)
        throw DomainError("sample_statistics: need N >= 2 trajectories");
    std::vector<long> idx(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        idx[i] = find_time_index(records[i], t);
        if (idx[i] < 0)
            throw AlignmentError("sample_statistics: trajectory " + std::to_string(i) +
                                 " has no sample at t = " + std::to_string(t));
    }
    return stats_at_index(records, idx);
}

StatSeries build_stat_series(std::span<const TrajectoryRecord> records) {
    if (records.size() < 2)
        throw DomainError("build_stat_series: need N >= 2 trajectories");
    const auto& times = records.front().times;
    for (const auto& r : records)
        if (r.times.size() != times.size())
            throw AlignmentError("build_stat_series: trajectories sampled on different lattices");
    StatSeries out;
    out.times = times;
    out.stats.reserve(times.size());
    std::vector<long> idx(records.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        std::fill(idx.begin(), idx.end(), static_cast<long>(k));
        out.stats.push_back(stats_at_index(records, idx));
    }
    return out;
}

DiffusionConstants fit_series(const StatSeries& series, const FitOptions& opt,
                              FitResult* detail) {
    std::vector<std::size_t> sel;
    for (std::size_t k = 0; k < series.times.size(); ++k)
        if (series.times[k] >= opt.t_min - kTimeTol &&
            series.times[k] <= opt.t_max + kTimeTol)
            sel.push_back(k);
    if (sel.size() < 10)
        throw DomainError("fit_series: need >= 10 time points in the fit window");
    const double span = series.times[sel.back()] - series.times[sel.front()];
    if (span < 1.0)
        throw DomainError("fit_series: fit window must span at least one relaxation time");

    // D_p from Var[p](t) = D_p (1 - e^{-2t}) / 2.
    double num = 0.0, den = 0.0;
    for (auto k : sel) {
        const double f = 0.5 * (1.0 - std::exp(-2.0 * series.times[k]));
        num += f * series.stats[k].var_p;
        den += f * f;
    }
    if (!(den > 0.0))
        throw NumericalError("fit_series: degenerate Var[p] design");
    const double d_p = num / den;

    // D_xp from Cov(t) = D_p (1-e^{-t})^2 / 2 + D_xp (1-e^{-t}).
    num = den = 0.0;
    for (auto k : sel) {
        const double e1 = 1.0 - std::exp(-series.times[k]);
        const double z = series.stats[k].cov_xp - 0.5 * d_p * e1 * e1;
        num += e1 * z;
        den += e1 * e1;
    }
    const double d_xp = num / den;

    // D_x from Var[x](t); the unknown enters only through D_x * t.
    num = den = 0.0;
    for (auto k : sel) {
        const double t = series.times[k];
        const double e1 = 1.0 - std::exp(-t);
        const double known =
            (d_p + 2.0 * d_xp) * t - 0.5 * d_p * e1 * e1 - (d_p + 2.0 * d_xp) * e1;
        const double z = series.stats[k].var_x - known;
        num += t * z;
        den += t * t;
    }
    const double d_x = num / den;

    DiffusionConstants out;
    out.d_x = d_x;
    out.d_p = d_p;
    out.d_xp = d_xp;
    out.source = DiffusionConstants::Source::Fitted;

    if (detail) {
        double rp = 0.0, rc = 0.0, rx = 0.0;
        for (auto k : sel) {
            const SecondMoments m = ou_moments(out, series.times[k]);
            rp += std::pow(series.stats[k].var_p - m.var_p, 2);
            rc += std::pow(series.stats[k].cov_xp - m.cov_xp, 2);
            rx += std::pow(series.stats[k].var_x - m.var_x, 2);
        }
        detail->rms_var_p = std::sqrt(rp / sel.size());
        detail->rms_cov_xp = std::sqrt(rc / sel.size());
        detail->rms_var_x = std::sqrt(rx / sel.size());
    }
    return out;
}

FitResult fit_diffusion(std::span<const TrajectoryRecord> records,
                        const FitOptions& opt) {
    FitResult res;
    const StatSeries series = build_stat_series(records);
    res.constants = fit_series(series, opt, &res);

    if (opt.bootstrap > 0 && records.size() >= 2) {
        Rng rng(opt.seed);
        std::vector<TrajectoryRecord> resample;
        std::vector<double> bx, bp, bxp;
        bx.reserve(opt.bootstrap);
        bp.reserve(opt.bootstrap);
        bxp.reserve(opt.bootstrap);
        for (int b = 0; b < opt.bootstrap; ++b) {
            resample.clear();
            for (std::size_t i = 0; i < records.size(); ++i)
                resample.push_back(
                    records[rng.next_u64() % records.size()]);
            try {
                const DiffusionConstants d =
                    fit_series(build_stat_series(resample), opt, nullptr);
                bx.push_back(d.d_x);
                bp.push_back(d.d_p);
                bxp.push_back(d.d_xp);
            } catch (const NumericalError&) {
                // degenerate resample; skip
            }
        }
        auto sd = [](const std::vector<double>& v) {
            if (v.size() < 2)
                return 0.0;
            double m = 0.0;
            for (double x : v)
                m += x;
            m /= v.size();
            double s = 0.0;
            for (double x : v)
                s += (x - m) * (x - m);
            return std::sqrt(s / (v.size() - 1));
        };
        res.constants.sigma =
            DiffusionConstants::Uncertainty{sd(bx), sd(bp), sd(bxp)};
    }
    return res;
}

std::vector<Coverage> coverage_check(std::span<const TrajectoryRecord> records,
                                     std::span<const double> times,
                                     const DiffusionConstants& d, double x0,
                                     double p0) {
    std::vector<Coverage> out;
    out.reserve(times.size());
    for (double t : times) {
        const SecondMoments m = ou_moments(d, t);
        const double sd_x = std::sqrt(std::max(m.var_x, 0.0));
        const double sd_p = std::sqrt(std::max(m.var_p, 0.0));
        const double mean_x = x0 + p0 * (1.0 - std::exp(-t));
        const double mean_p = p0 * std::exp(-t);
        long in_x = 0, in_p = 0;
        for (const auto& rec : records) {
            const long idx = find_time_index(rec, t);
            if (idx < 0)
                throw AlignmentError("coverage_check: missing sample at t = " +
                                     std::to_string(t));
            if (std::abs(rec.moments[idx].mean_x - mean_x) <= sd_x)
                ++in_x;
            if (std::abs(rec.moments[idx].mean_p - mean_p) <= sd_p)
                ++in_p;
        }
        const double n = static_cast<double>(records.size());
        out.push_back({t, in_x / n, in_p / n});
    }
    return out;
}

} // namespace qbm
