#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "qbm/errors.hpp"
#include "qbm/gaussian.hpp"
#include "qbm/io.hpp"

using namespace qbm;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto p = fs::temp_directory_path() / "qbm_io_test";
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_CASE("csv round trip preserves trajectory records bit-exactly") {
    std::vector<TrajectoryRecord> records(2);
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 5; ++k) {
            records[i].times.push_back(0.1 * k);
            Moments m{0.1 * i + k, -0.3 * k, 1.0 / (k + 1), 2.0 / (k + 1), 1e-17 * k};
            records[i].moments.push_back(m);
        }
    const auto path = temp_dir() / "traj.csv";
    write_csv(path, trajectory_table(records));
    const auto back = records_from_table(read_csv(path));
    REQUIRE(back.size() == 2);
    for (int i = 0; i < 2; ++i) {
        CHECK(back[i].times == records[i].times);
        for (std::size_t k = 0; k < back[i].times.size(); ++k) {
            CHECK(back[i].moments[k].mean_x == records[i].moments[k].mean_x);
            CHECK(back[i].moments[k].var_p == records[i].moments[k].var_p);
            CHECK(back[i].moments[k].cov_xp == records[i].moments[k].cov_xp);
        }
    }
}

TEST_CASE("emission is deterministic") {
    Table t;
    t.columns = {"a", "b"};
    t.rows = {{1.0 / 3.0, 2e-301}, {-0.0, 17.0}};
    const auto p1 = temp_dir() / "t1.csv";
    const auto p2 = temp_dir() / "t2.csv";
    write_csv(p1, t);
    write_csv(p2, t);
    CHECK(slurp(p1) == slurp(p2));

    const auto j1 = temp_dir() / "t1.json";
    const auto j2 = temp_dir() / "t2.json";
    write_json(j1, t);
    write_json(j2, t);
    CHECK(slurp(j1) == slurp(j2));
    CHECK(slurp(j1).find("0.33333333333333331") != std::string::npos);
}

TEST_CASE("checkpoint round trip") {
    const double kappa = 3.0;
    const Grid g = Grid::spanning(kappa, 0.0, 4.0, 256);
    const auto ps = pointer_fixed_point(kappa);
    const auto st = gaussian_state(g, 0.4, -0.3, ps.var_x, ps.cov_xp);
    const auto path = temp_dir() / "state.ckpt";
    write_checkpoint(path, st, 1.25);

    double t = 0.0;
    const auto back = read_checkpoint(path, &t);
    CHECK(t == 1.25);
    CHECK(back.grid.n == g.n);
    CHECK(back.grid.kappa == g.kappa);
    CHECK(back.grid.x_min == g.x_min);
    // Amplitudes survive the complex64 narrowing to float precision.
    for (int i = 0; i < g.n; ++i)
        CHECK(std::abs(back.amp[i] - st.amp[i]) < 1e-6);
}

TEST_CASE("corrupt and missing files raise IoError") {
    const auto path = temp_dir() / "garbage.ckpt";
    std::ofstream(path) << "not a checkpoint at all";
    CHECK_THROWS_AS(read_checkpoint(path), IoError);
    CHECK_THROWS_AS(read_checkpoint(temp_dir() / "nope.ckpt"), IoError);
    CHECK_THROWS_AS(read_csv(temp_dir() / "nope.csv"), IoError);
}

TEST_CASE("manifest holds all entries") {
    const auto path = temp_dir() / "manifest.json";
    write_manifest(path, {{"seed", "42"}, {"subcommand", "evolve"}});
    const auto text = slurp(path);
    CHECK(text.find("\"seed\"") != std::string::npos);
    CHECK(text.find("42") != std::string::npos);
}

TEST_CASE("jumps table layout") {
    std::vector<TrajectoryRecord> records(2);
    records[0].jump_times = {0.5, 0.9};
    records[1].jump_times = {0.2};
    const auto t = jumps_table(records);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[0][0] == 0.0);
    CHECK(t.rows[2][0] == 1.0);
    CHECK(t.rows[2][1] == 0.2);
}
