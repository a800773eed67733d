#include "qbm/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "qbm/errors.hpp"

namespace qbm {

namespace {

void require_little_endian() {
    const std::uint32_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    if (b != 1)
        throw IoError("checkpoint format requires a little-endian host");
}

constexpr char kMagic[8] = {'Q', 'B', 'M', 'G', 'R', 'I', 'D', '1'};

} // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv(const std::filesystem::path& path, const Table& table) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        out << (c ? "," : "") << table.columns[c];
    out << "\n";
    for (const auto& row : table.rows) {
        if (row.size() != table.columns.size())
            throw IoError("write_csv: ragged row in " + path.string());
        for (std::size_t c = 0; c < row.size(); ++c)
            out << (c ? "," : "") << format_double(row[c]);
        out << "\n";
    }
    if (!out)
        throw IoError("write failed: " + path.string());
}

// Hand-rolled so every float goes through format_double (17 significant
// digits, byte-stable across runs).
void write_json(const std::filesystem::path& path, const Table& table) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    out << "{\n  \"columns\": [";
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        out << (c ? ", " : "") << nlohmann::json(table.columns[c]).dump();
    out << "],\n  \"rows\": [\n";
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        out << "    [";
        for (std::size_t c = 0; c < table.rows[r].size(); ++c)
            out << (c ? ", " : "") << format_double(table.rows[r][c]);
        out << (r + 1 < table.rows.size() ? "],\n" : "]\n");
    }
    out << "  ]\n}\n";
    if (!out)
        throw IoError("write failed: " + path.string());
}

void write_manifest(const std::filesystem::path& path,
                    const std::map<std::string, std::string>& entries) {
    nlohmann::ordered_json j;
    for (const auto& [k, v] : entries)
        j[k] = v;
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
    if (!out)
        throw IoError("write failed: " + path.string());
}

void write_checkpoint(const std::filesystem::path& path, const GridState& state,
                      double time) {
    require_little_endian();
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    const std::uint32_t version = 1;
    const std::uint64_t n = static_cast<std::uint64_t>(state.grid.n);
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&state.grid.kappa), sizeof(double));
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(&state.grid.x_min), sizeof(double));
    out.write(reinterpret_cast<const char*>(&state.grid.x_max), sizeof(double));
    out.write(reinterpret_cast<const char*>(&time), sizeof(double));
    std::vector<float> buf(2 * state.amp.size());
    for (std::size_t i = 0; i < state.amp.size(); ++i) {
        buf[2 * i] = static_cast<float>(state.amp[i].real());
        buf[2 * i + 1] = static_cast<float>(state.amp[i].imag());
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out)
        throw IoError("write failed: " + path.string());
}

GridState read_checkpoint(const std::filesystem::path& path, double* time) {
    require_little_endian();
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open for reading: " + path.string());
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t n = 0;
    GridState st;
    double t = 0.0;
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("not a qbm checkpoint: " + path.string());
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != 1)
        throw IoError("unsupported checkpoint version in " + path.string());
    in.read(reinterpret_cast<char*>(&st.grid.kappa), sizeof(double));
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    in.read(reinterpret_cast<char*>(&st.grid.x_min), sizeof(double));
    in.read(reinterpret_cast<char*>(&st.grid.x_max), sizeof(double));
    in.read(reinterpret_cast<char*>(&t), sizeof(double));
    if (!in || n == 0 || n > (1u << 20))
        throw IoError("corrupt checkpoint header: " + path.string());
    st.grid.n = static_cast<int>(n);
    std::vector<float> buf(2 * n);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in)
        throw IoError("truncated checkpoint: " + path.string());
    st.amp.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        st.amp[i] = std::complex<double>(buf[2 * i], buf[2 * i + 1]);
    if (time)
        *time = t;
    return st;
}

Table trajectory_table(std::span<const TrajectoryRecord> records) {
    Table t;
    t.columns = {"traj_id", "t", "x", "p", "vx", "vp", "cxp"};
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        for (std::size_t k = 0; k < r.times.size(); ++k)
            t.rows.push_back({static_cast<double>(i), r.times[k],
                              r.moments[k].mean_x, r.moments[k].mean_p,
                              r.moments[k].var_x, r.moments[k].var_p,
                              r.moments[k].cov_xp});
    }
    return t;
}

Table jumps_table(std::span<const TrajectoryRecord> records) {
    Table t;
    t.columns = {"traj_id", "t_jump"};
    for (std::size_t i = 0; i < records.size(); ++i)
        for (double tj : records[i].jump_times)
            t.rows.push_back({static_cast<double>(i), tj});
    return t;
}

std::vector<TrajectoryRecord> records_from_table(const Table& table) {
    const std::vector<std::string> expect = {"traj_id", "t",  "x", "p",
                                             "vx",      "vp", "cxp"};
    if (table.columns != expect)
        throw IoError("trajectory table has unexpected columns");
    std::vector<TrajectoryRecord> out;
    for (const auto& row : table.rows) {
        const auto id = static_cast<std::size_t>(row[0]);
        if (id >= out.size())
            out.resize(id + 1);
        out[id].times.push_back(row[1]);
        Moments m;
        m.mean_x = row[2];
        m.mean_p = row[3];
        m.var_x = row[4];
        m.var_p = row[5];
        m.cov_xp = row[6];
        out[id].moments.push_back(m);
    }
    return out;
}

Table read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open for reading: " + path.string());
    Table t;
    std::string line;
    if (!std::getline(in, line))
        throw IoError("empty csv: " + path.string());
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ','))
        t.columns.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::stringstream ls(line);
        std::vector<double> row;
        while (std::getline(ls, cell, ','))
            row.push_back(std::stod(cell));
        if (row.size() != t.columns.size())
            throw IoError("ragged csv row in " + path.string());
        t.rows.push_back(std::move(row));
    }
    return t;
}

} // namespace qbm
