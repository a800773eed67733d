#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "qbm/grid.hpp"
#include "qbm/unravel.hpp"

namespace qbm {

// All emitted floats carry 17 significant digits so that re-runs are
// byte-identical and re-ingestion is lossless.
std::string format_double(double v);

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

void write_csv(const std::filesystem::path& path, const Table& table);
void write_json(const std::filesystem::path& path, const Table& table);

// Flat key -> value manifest written alongside every result: resolved
// configuration, seed, artifact version, wall time.
void write_manifest(const std::filesystem::path& path,
                    const std::map<std::string, std::string>& entries);

// Binary checkpoint: magic "QBMGRID1", u32 version, f64 kappa, u64 n,
// f64 x_min, f64 x_max, f64 time, then n little-endian complex64
// (float32 re, float32 im) amplitudes.
void write_checkpoint(const std::filesystem::path& path, const GridState& state,
                      double time);
GridState read_checkpoint(const std::filesystem::path& path, double* time = nullptr);

// Combined trajectory table (traj_id, t, x, p, vx, vp, cxp) and its inverse.
Table trajectory_table(std::span<const TrajectoryRecord> records);
Table jumps_table(std::span<const TrajectoryRecord> records);
std::vector<TrajectoryRecord> records_from_table(const Table& table);
Table read_csv(const std::filesystem::path& path);

} // namespace qbm
