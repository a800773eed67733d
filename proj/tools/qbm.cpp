#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qbm/engine.hpp"
#include "qbm/errors.hpp"
#include "qbm/estimators.hpp"
#include "qbm/gaussian.hpp"
#include "qbm/io.hpp"
#include "qbm/jump_model.hpp"
#include "qbm/me_oracle.hpp"
#include "qbm/ou.hpp"
#include "qbm/rng.hpp"
#include "qbm/unravel.hpp"
#include "qbm/weights.hpp"

namespace fs = std::filesystem;
using qbm::format_double;

namespace {

constexpr const char* kVersion = "0.1.0";

struct GlobalOpts {
    std::string out_dir = ".";
    std::string format = "csv";
    std::uint64_t seed = 1;
    int threads = 0;
    std::string config_file;
};

void emit_table(const GlobalOpts& g, const std::string& stem, const qbm::Table& t) {
    const fs::path dir(g.out_dir);
    fs::create_directories(dir);
    if (g.format == "json")
        qbm::write_json(dir / (stem + ".json"), t);
    else
        qbm::write_csv(dir / (stem + ".csv"), t);
}

class ManifestWriter {
public:
    ManifestWriter(const GlobalOpts& g, std::string subcommand)
        : g_(g), sub_(std::move(subcommand)),
          start_(std::chrono::steady_clock::now()) {
        set("subcommand", sub_);
        set("artifact_version", kVersion);
        set("seed", std::to_string(g.seed));
        set("out", g.out_dir);
        set("format", g.format);
        set("threads", std::to_string(g.threads));
    }
    void set(const std::string& k, const std::string& v) { entries_[k] = v; }
    void set(const std::string& k, double v) { entries_[k] = format_double(v); }
    void set(const std::string& k, int v) { entries_[k] = std::to_string(v); }
    ~ManifestWriter() {
        const auto wall = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - start_)
                              .count();
        entries_["wall_time_s"] = format_double(wall);
        try {
            fs::create_directories(g_.out_dir);
            qbm::write_manifest(fs::path(g_.out_dir) / (sub_ + "_manifest.json"),
                                entries_);
        } catch (...) {
            // manifest failure must not mask the primary error path
        }
    }

private:
    const GlobalOpts& g_;
    std::string sub_;
    std::chrono::steady_clock::time_point start_;
    std::map<std::string, std::string> entries_;
};

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t next = s.find(',', pos);
        if (next == std::string::npos)
            next = s.size();
        out.push_back(std::stod(s.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

qbm::InitialStateSpec parse_init(const std::string& text) {
    qbm::InitialStateSpec spec;
    if (text == "pointer") {
        spec.kind = qbm::InitialStateSpec::Kind::Pointer;
        return spec;
    }
    if (text.rfind("gauss:", 0) == 0) {
        const auto vals = parse_double_list(text.substr(6));
        if (vals.size() != 3)
            throw qbm::UsageError("--init gauss expects gauss:vx,vp,cxp");
        spec.kind = qbm::InitialStateSpec::Kind::Gauss;
        spec.var_x = vals[0];
        spec.var_p = vals[1];
        spec.cov_xp = vals[2];
        return spec;
    }
    if (text.rfind("superpos:", 0) == 0) {
        const fs::path file = text.substr(9);
        std::ifstream in(file);
        if (!in)
            throw qbm::IoError("cannot read superposition file: " + file.string());
        nlohmann::json j;
        in >> j;
        spec.kind = qbm::InitialStateSpec::Kind::Superpos;
        for (const auto& e : j) {
            qbm::PacketInit p;
            p.weight = e.at("weight").get<double>();
            p.mean_x = e.at("x").get<double>();
            p.mean_p = e.value("p", 0.0);
            p.var_x = e.value("vx", 0.0); // 0 -> pointer-shaped
            p.cov_xp = e.value("cxp", 0.0);
            spec.packets.push_back(p);
        }
        return spec;
    }
    throw qbm::UsageError("unknown --init '" + text +
                          "'; expected pointer|gauss:vx,vp,cxp|superpos:file");
}

// ---- subcommand runners ---------------------------------------------------

int run_fixed_point(const GlobalOpts& g, double kappa, const std::string& sweep) {
    ManifestWriter man(g, "fixed-point");
    man.set("kappa", kappa);
    man.set("sweep", sweep);

    std::vector<double> kappas;
    if (sweep.empty()) {
        kappas.push_back(kappa);
    } else {
        // lo:hi:n, log-spaced
        const auto c1 = sweep.find(':');
        const auto c2 = sweep.find(':', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw qbm::UsageError("--sweep expects lo:hi:n");
        const double lo = std::stod(sweep.substr(0, c1));
        const double hi = std::stod(sweep.substr(c1 + 1, c2 - c1 - 1));
        const int n = std::stoi(sweep.substr(c2 + 1));
        if (!(lo > 0.0) || !(hi > lo) || n < 2)
            throw qbm::UsageError("--sweep expects 0 < lo < hi and n >= 2");
        for (int i = 0; i < n; ++i)
            kappas.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
    }

    qbm::Table t;
    t.columns = {"kappa", "vx_ps", "vp_ps", "cxp_ps", "eig_re_1", "eig_re_2"};
    for (double k : kappas) {
        const auto ps = qbm::pointer_fixed_point(k);
        const auto eig = qbm::stability_eigenvalues(k);
        t.rows.push_back({k, ps.var_x, ps.var_p, ps.cov_xp, eig[0].real(), eig[1].real()});
    }
    emit_table(g, "fixed_point", t);
    return 0;
}

int run_evolve(const GlobalOpts& g, double kappa, double t_final, double dt,
               int grid_n, const std::string& init_text, double sigmas,
               double x0, double p0) {
    ManifestWriter man(g, "evolve");
    man.set("kappa", kappa);
    man.set("t-final", t_final);
    man.set("dt", dt);
    man.set("grid-n", grid_n);
    man.set("init", init_text);
    man.set("grid-sigmas", sigmas);
    man.set("x0", x0);
    man.set("p0", p0);

    qbm::EnsembleConfig cfg;
    cfg.kappa = kappa;
    cfg.t_final = t_final;
    cfg.dt = dt;
    cfg.grid_n = grid_n;
    cfg.grid_sigmas = sigmas;
    cfg.init = parse_init(init_text);
    cfg.init.mean_x = x0;
    cfg.init.mean_p = p0;
    cfg.record_stride = 10;
    cfg.rate_override = 0.0; // deterministic NLPSE flow only
    cfg.master_seed = g.seed;

    const qbm::Grid grid = cfg.make_grid();
    const qbm::GridState init = qbm::build_initial_state(cfg.init, grid);
    const auto rec = qbm::run_trajectory(init, cfg, g.seed);

    qbm::Table t;
    t.columns = {"t", "x", "p", "vx", "vp", "cxp"};
    for (std::size_t k = 0; k < rec.times.size(); ++k)
        t.rows.push_back({rec.times[k], rec.moments[k].mean_x,
                          rec.moments[k].mean_p, rec.moments[k].var_x,
                          rec.moments[k].var_p, rec.moments[k].cov_xp});
    emit_table(g, "evolve", t);
    return 0;
}

int run_unravel(const GlobalOpts& g, qbm::EnsembleConfig cfg,
                const std::string& init_text, const std::string& save_states) {
    ManifestWriter man(g, "unravel");
    cfg.master_seed = g.seed;
    cfg.threads = g.threads;
    cfg.init = parse_init(init_text);
    cfg.keep_final_state = !save_states.empty();
    man.set("kappa", cfg.kappa);
    man.set("n-traj", cfg.n_traj);
    man.set("t-final", cfg.t_final);
    man.set("dt", cfg.dt);
    man.set("grid-n", cfg.grid_n);
    man.set("record-stride", cfg.record_stride);
    man.set("init", init_text);
    man.set("grid-sigmas", cfg.grid_sigmas);
    man.set("window", cfg.window);
    man.set("recenter", cfg.recenter ? "true" : "false");
    man.set("bernoulli-jumps", cfg.bernoulli_jumps ? "true" : "false");
    man.set("save-states", save_states);

    const auto result = qbm::run_ensemble(cfg);
    emit_table(g, "trajectories", qbm::trajectory_table(result.records));
    emit_table(g, "jumps", qbm::jumps_table(result.records));

    if (!save_states.empty()) {
        fs::create_directories(save_states);
        for (std::size_t i = 0; i < result.records.size(); ++i)
            if (result.records[i].final_state)
                qbm::write_checkpoint(fs::path(save_states) /
                                          ("traj_" + std::to_string(i) + ".ckpt"),
                                      *result.records[i].final_state, cfg.t_final);
    }

    man.set("n_failures", static_cast<int>(result.failures.size()));
    for (const auto& f : result.failures)
        std::cerr << "qbm: " << f.what << "\n";
    return result.failures.empty() ? 0 : 3;
}

int run_born(const GlobalOpts& g, const std::string& weights_text,
             const std::string& sep_text, double kappa, int runs) {
    ManifestWriter man(g, "born");
    man.set("kappa", kappa);
    man.set("weights", weights_text);
    man.set("sep", sep_text);
    man.set("runs", runs);

    const auto w = parse_double_list(weights_text);
    const auto sep = parse_double_list(sep_text);
    if (w.size() < 2)
        throw qbm::UsageError("--weights needs at least two entries");
    if (sep.empty() || sep.size() > 2)
        throw qbm::UsageError("--sep expects dx[,dp]");
    if (runs < 1)
        throw qbm::UsageError("--runs must be >= 1");
    const double dx = sep[0];
    const double dp = sep.size() > 1 ? sep[1] : 0.0;

    const auto ps = qbm::pointer_fixed_point(kappa);
    qbm::PacketEnsemble ens;
    double wsum = 0.0;
    for (double wi : w)
        wsum += wi;
    for (std::size_t j = 0; j < w.size(); ++j) {
        const double c = static_cast<double>(j) - 0.5 * (w.size() - 1);
        ens.packets.push_back({c * dx, c * dp, ps.var_x, ps.var_p, ps.cov_xp});
        ens.weights.push_back(w[j] / wsum);
    }

    std::vector<long> survivors(w.size(), 0);
    long absorbed = 0;
    for (int r = 0; r < runs; ++r) {
        const auto res = qbm::run_weight_process(ens, kappa, 50.0,
                                                 qbm::split_seed(g.seed, r));
        if (res.survivor >= 0) {
            ++survivors[res.survivor];
            ++absorbed;
        }
    }

    qbm::Table t;
    t.columns = {"packet", "weight0", "survivals", "frequency"};
    double chi2 = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        const double freq = static_cast<double>(survivors[j]) / runs;
        const double expected = ens.weights[j] * runs;
        chi2 += (survivors[j] - expected) * (survivors[j] - expected) / expected;
        t.rows.push_back({static_cast<double>(j), ens.weights[j],
                          static_cast<double>(survivors[j]), freq});
    }
    emit_table(g, "born_hist", t);
    man.set("chi2", chi2);
    man.set("dof", static_cast<int>(w.size()) - 1);
    man.set("absorbed", static_cast<int>(absorbed));
    std::cout << "born: " << absorbed << "/" << runs
              << " absorbed, chi2 = " << format_double(chi2) << " (dof "
              << w.size() - 1 << ")\n";
    return 0;
}

int run_jump_sde(const GlobalOpts& g, double kappa, double t_final, int runs,
                 double dt, int record_stride) {
    ManifestWriter man(g, "jump-sde");
    man.set("kappa", kappa);
    man.set("t-final", t_final);
    man.set("runs", runs);
    man.set("record-stride", record_stride);

    const auto params = qbm::jump_model_params(kappa);
    if (dt == 0.0)
        dt = std::min(1e-3, 0.05 / params.r_ps);
    man.set("dt", dt);

    qbm::Table traj;
    traj.columns = {"traj_id", "t", "x", "p"};
    std::vector<std::vector<qbm::PhaseSample>> all;
    all.reserve(runs);
    for (int r = 0; r < runs; ++r) {
        all.push_back(qbm::simulate_jump_sde(params, 0.0, 0.0, t_final, dt,
                                             qbm::split_seed(g.seed, r)));
        for (std::size_t k = 0; k < all.back().size(); k += record_stride)
            traj.rows.push_back({static_cast<double>(r), all.back()[k].t,
                                 all.back()[k].x, all.back()[k].p});
    }
    emit_table(g, "jump_sde_traj", traj);

    // Ensemble moments vs the analytic diffusion prediction.
    const auto d = qbm::analytic_diffusion(kappa);
    qbm::Table summary;
    summary.columns = {"t",      "ex",     "ep",          "var_x",
                       "var_p",  "cov_xp", "var_x_model", "var_p_model",
                       "cov_model"};
    const std::size_t n_samples = all.front().size();
    for (std::size_t k = 0; k < n_samples; k += record_stride) {
        double ex = 0.0, ep = 0.0;
        for (const auto& a : all) {
            ex += a[k].x;
            ep += a[k].p;
        }
        ex /= runs;
        ep /= runs;
        double vx = 0.0, vp = 0.0, c = 0.0;
        for (const auto& a : all) {
            vx += (a[k].x - ex) * (a[k].x - ex);
            vp += (a[k].p - ep) * (a[k].p - ep);
            c += (a[k].x - ex) * (a[k].p - ep);
        }
        const double bessel = runs > 1 ? runs - 1.0 : 1.0;
        const auto pred = qbm::ou_moments(d, all.front()[k].t);
        summary.rows.push_back({all.front()[k].t, ex, ep, vx / bessel, vp / bessel,
                                c / bessel, pred.var_x, pred.var_p, pred.cov_xp});
    }
    emit_table(g, "jump_sde_summary", summary);
    return 0;
}

int run_ou_sim(const GlobalOpts& g, double d_x, double d_p, double d_xp, int runs,
               double t_final, double dt, int record_stride) {
    ManifestWriter man(g, "ou-sim");
    man.set("dx", d_x);
    man.set("dp", d_p);
    man.set("dxp", d_xp);
    man.set("runs", runs);
    man.set("t-final", t_final);
    man.set("dt", dt);
    man.set("record-stride", record_stride);

    qbm::DiffusionConstants d;
    d.d_x = d_x;
    d.d_p = d_p;
    d.d_xp = d_xp;
    const auto B = qbm::ou_from_diffusion(d);

    qbm::Table traj;
    traj.columns = {"traj_id", "t", "x", "p"};
    std::vector<std::vector<qbm::PhaseSample>> all;
    all.reserve(runs);
    for (int r = 0; r < runs; ++r) {
        all.push_back(qbm::simulate_ou(B, 0.0, 0.0, t_final, dt,
                                       qbm::split_seed(g.seed, r)));
        for (std::size_t k = 0; k < all.back().size(); k += record_stride)
            traj.rows.push_back({static_cast<double>(r), all.back()[k].t,
                                 all.back()[k].x, all.back()[k].p});
    }
    emit_table(g, "ou_traj", traj);

    qbm::Table summary;
    summary.columns = {"t",     "var_x", "var_p",       "cov_xp",
                       "var_x_closed", "var_p_closed", "cov_closed"};
    for (std::size_t k = 0; k < all.front().size(); k += record_stride) {
        double ex = 0.0, ep = 0.0;
        for (const auto& a : all) {
            ex += a[k].x;
            ep += a[k].p;
        }
        ex /= runs;
        ep /= runs;
        double vx = 0.0, vp = 0.0, c = 0.0;
        for (const auto& a : all) {
            vx += (a[k].x - ex) * (a[k].x - ex);
            vp += (a[k].p - ep) * (a[k].p - ep);
            c += (a[k].x - ex) * (a[k].p - ep);
        }
        const double bessel = runs > 1 ? runs - 1.0 : 1.0;
        const auto pred = qbm::ou_moments(d, all.front()[k].t);
        summary.rows.push_back({all.front()[k].t, vx / bessel, vp / bessel,
                                c / bessel, pred.var_x, pred.var_p, pred.cov_xp});
    }
    emit_table(g, "ou_summary", summary);
    return 0;
}

int run_fit(const GlobalOpts& g, const std::string& input, const std::string& out_json,
            double kappa, double t_min, double t_max, int bootstrap) {
    ManifestWriter man(g, "fit");
    man.set("input", input);
    man.set("kappa", kappa);
    man.set("t-min", t_min);
    man.set("t-max", t_max);
    man.set("bootstrap", bootstrap);
    man.set("out-json", out_json);

    const auto records = qbm::records_from_table(qbm::read_csv(input));
    qbm::FitOptions opt;
    opt.t_min = t_min;
    opt.t_max = t_max;
    opt.bootstrap = bootstrap;
    opt.seed = g.seed;
    const auto fit = qbm::fit_diffusion(records, opt);
    const auto& c = fit.constants;
    const auto sig = c.sigma.value_or(qbm::DiffusionConstants::Uncertainty{0, 0, 0});

    std::ofstream out(out_json);
    if (!out)
        throw qbm::IoError("cannot open for writing: " + out_json);
    out << "{\n"
        << "  \"kappa\": " << format_double(kappa) << ",\n"
        << "  \"N\": " << records.size() << ",\n"
        << "  \"D_x\": " << format_double(c.d_x) << ",\n"
        << "  \"D_p\": " << format_double(c.d_p) << ",\n"
        << "  \"D_xp\": " << format_double(c.d_xp) << ",\n"
        << "  \"sigma_Dx\": " << format_double(sig.d_x) << ",\n"
        << "  \"sigma_Dp\": " << format_double(sig.d_p) << ",\n"
        << "  \"sigma_Dxp\": " << format_double(sig.d_xp) << ",\n"
        << "  \"residuals\": [" << format_double(fit.rms_var_p) << ", "
        << format_double(fit.rms_cov_xp) << ", " << format_double(fit.rms_var_x)
        << "]\n}\n";
    std::cout << "fit: D_x=" << format_double(c.d_x)
              << " D_p=" << format_double(c.d_p)
              << " D_xp=" << format_double(c.d_xp) << "\n";
    return 0;
}

int run_verify_me(const GlobalOpts& g, double kappa, int n_grid, double t_final,
                  const std::string& against, double window) {
    ManifestWriter man(g, "verify-me");
    man.set("kappa", kappa);
    man.set("n-grid", n_grid);
    man.set("t-final", t_final);
    man.set("against", against);
    man.set("window", window);

    qbm::Grid grid;
    if (window > 0.0)
        grid = qbm::Grid::spanning(kappa, 0.0, 0.5 * window, n_grid);
    else
        grid = qbm::Grid::pointer_default(kappa, n_grid, 24.0);
    const auto ps = qbm::pointer_fixed_point(kappa);
    const auto psi0 = qbm::gaussian_state(grid, 0.0, 0.5, ps.var_x, ps.cov_xp);
    auto rho = qbm::DensityMatrix::pure(psi0);
    qbm::MasterEquationEngine me(grid);

    qbm::Table t;
    t.columns = {"t", "mean_p", "mean_p_expected", "var_x", "var_p", "purity"};
    const long n_steps = std::lround(t_final / me.dt());
    const long stride = std::max(1L, n_steps / 50);
    const auto m0 = me.moments(rho);
    t.rows.push_back({0.0, m0.mean_p, m0.mean_p, m0.var_x, m0.var_p, rho.purity()});
    for (long k = 0; k < n_steps; ++k) {
        me.step(rho);
        if ((k + 1) % stride == 0 || k + 1 == n_steps) {
            const auto m = me.moments(rho);
            const double tt = (k + 1) * me.dt();
            t.rows.push_back({tt, m.mean_p, m0.mean_p * std::exp(-tt), m.var_x,
                              m.var_p, rho.purity()});
        }
    }
    emit_table(g, "verify_me", t);
    for (const auto& row : t.rows)
        std::printf("t=%8.4f  <p>=%12.6g (expect %12.6g)  Vx=%12.6g  Vp=%12.6g  purity=%8.5f\n",
                    row[0], row[1], row[2], row[3], row[4], row[5]);

    if (!against.empty()) {
        std::vector<qbm::GridState> states;
        for (const auto& e : fs::directory_iterator(against)) {
            if (e.path().extension() != ".ckpt")
                continue;
            auto st = qbm::read_checkpoint(e.path());
            if (!(st.grid == grid))
                throw qbm::AlignmentError("checkpoint grid does not match the ME grid");
            states.push_back(std::move(st));
        }
        if (states.empty())
            throw qbm::IoError("no .ckpt files under " + against);
        const double dist = qbm::compare_ensemble(states, rho);
        man.set("trace_distance", dist);
        man.set("n_states", static_cast<int>(states.size()));
        std::cout << "trace distance at t=" << format_double(t_final) << ": "
                  << format_double(dist) << " (N=" << states.size() << ")\n";
    }
    return 0;
}

// ---- config file merging ---------------------------------------------------

std::vector<std::string> merge_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size())
            config = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0)
            config = args[i].substr(9);
    }
    if (config.empty())
        return args;

    std::ifstream in(config);
    if (!in)
        throw qbm::IoError("cannot read config file: " + config);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw qbm::UsageError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object())
        throw qbm::UsageError("config file must be a flat JSON object");

    // Flat key/value pairs become long options injected right after the
    // subcommand token; explicit command-line flags win (TakeLast policy).
    // Result-metadata keys are skipped so a manifest can be replayed as a
    // config file directly.
    static const std::set<std::string> metadata = {
        "subcommand", "artifact_version", "wall_time_s", "n_failures",
        "chi2",       "dof",              "absorbed",    "trace_distance",
        "n_states"};
    std::vector<std::string> injected;
    for (const auto& [key, value] : j.items()) {
        if (metadata.count(key))
            continue;
        const std::string text =
            value.is_string() ? value.get<std::string>() : value.dump();
        injected.push_back("--" + key + "=" + text);
    }
    std::size_t sub_pos = 0;
    while (sub_pos < args.size() && args[sub_pos].rfind("-", 0) == 0)
        ++sub_pos;
    std::vector<std::string> merged(args.begin(),
                                    args.begin() + std::min(sub_pos + 1, args.size()));
    merged.insert(merged.end(), injected.begin(), injected.end());
    if (sub_pos + 1 < args.size())
        merged.insert(merged.end(), args.begin() + sub_pos + 1, args.end());
    return merged;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pointer-state unraveling of quantum Brownian motion"};
    app.set_version_flag("--version", std::string("qbm ") + kVersion);
    app.fallthrough();
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    GlobalOpts g;
    app.add_option("--out", g.out_dir, "Output directory");
    app.add_option("--format", g.format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--seed", g.seed, "Master seed")->envname("QBM_SEED");
    app.add_option("--threads", g.threads, "Worker threads (0 = auto)")
        ->envname("QBM_THREADS");
    app.add_option("--config", g.config_file,
                   "Flat key-value JSON config; command-line flags override");

    // fixed-point
    auto* fp = app.add_subcommand("fixed-point", "Pointer-state widths and stability");
    fp->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    double fp_kappa = 1.0;
    std::string fp_sweep;
    fp->add_option("--kappa", fp_kappa, "Dimensionless kappa");
    fp->add_option("--sweep", fp_sweep, "Log-spaced sweep lo:hi:n");

    // evolve
    auto* ev = app.add_subcommand("evolve", "Deterministic NLPSE evolution");
    ev->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    double ev_kappa = 1.0, ev_tf = 1.0, ev_dt = 0.0, ev_sigmas = 24.0;
    double ev_x0 = 0.0, ev_p0 = 0.0;
    int ev_n = 1024;
    std::string ev_init = "pointer";
    ev->add_option("--kappa", ev_kappa, "Dimensionless kappa");
    ev->add_option("--t-final", ev_tf, "Final time");
    ev->add_option("--dt", ev_dt, "Step (0 = default)");
    ev->add_option("--grid-n", ev_n, "Grid points (power of two)");
    ev->add_option("--grid-sigmas", ev_sigmas, "Window width in pointer sigmas");
    ev->add_option("--init", ev_init, "pointer|gauss:vx,vp,cxp|superpos:file");
    ev->add_option("--x0", ev_x0, "Initial mean position (pointer/gauss)");
    ev->add_option("--p0", ev_p0, "Initial mean momentum (pointer/gauss)");

    // unravel
    auto* un = app.add_subcommand("unravel", "Stochastic trajectory ensemble");
    un->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    qbm::EnsembleConfig un_cfg;
    std::string un_init = "pointer", un_save;
    un->add_option("--kappa", un_cfg.kappa, "Dimensionless kappa");
    un->add_option("--n-traj", un_cfg.n_traj, "Number of trajectories");
    un->add_option("--t-final", un_cfg.t_final, "Final time");
    un->add_option("--dt", un_cfg.dt, "Step (0 = default)");
    un->add_option("--grid-n", un_cfg.grid_n, "Grid points");
    un->add_option("--grid-sigmas", un_cfg.grid_sigmas, "Window width in pointer sigmas");
    un->add_option("--window", un_cfg.window, "Explicit window width");
    un->add_option("--record-stride", un_cfg.record_stride, "Steps per sample");
    un->add_option("--init", un_init, "pointer|gauss:vx,vp,cxp|superpos:file");
    un->add_flag("--bernoulli-jumps", un_cfg.bernoulli_jumps,
                 "Per-step Bernoulli jump sampling instead of the exponential clock");
    un->add_flag("--recenter,!--no-recenter", un_cfg.recenter, "Moving window on/off");
    un->add_option("--save-states", un_save, "Directory for final-state checkpoints");

    // born
    auto* bo = app.add_subcommand("born", "Reduced weight process survivor statistics");
    bo->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string bo_weights = "0.5,0.5", bo_sep = "4";
    double bo_kappa = 50.0;
    int bo_runs = 1000;
    bo->add_option("--weights", bo_weights, "Initial weights w1,w2,...");
    bo->add_option("--sep", bo_sep, "Packet separation dx[,dp]");
    bo->add_option("--kappa", bo_kappa, "Dimensionless kappa");
    bo->add_option("--runs", bo_runs, "Number of runs");

    // jump-sde
    auto* js = app.add_subcommand("jump-sde", "Analytic two-sided Poisson jump model");
    js->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    double js_kappa = 50.0, js_tf = 5.0, js_dt = 0.0;
    int js_runs = 100, js_stride = 10;
    js->add_option("--kappa", js_kappa, "Dimensionless kappa");
    js->add_option("--t-final", js_tf, "Final time");
    js->add_option("--runs", js_runs, "Number of runs");
    js->add_option("--dt", js_dt, "Recording step (0 = default)");
    js->add_option("--record-stride", js_stride, "Samples per emitted row");

    // ou-sim
    auto* ou = app.add_subcommand("ou-sim", "Classical Ornstein-Uhlenbeck ensemble");
    ou->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    double ou_dx = 0.0, ou_dp = 2.0, ou_dxp = 0.0, ou_tf = 5.0, ou_dt = 1e-3;
    int ou_runs = 1000, ou_stride = 100;
    ou->add_option("--dx", ou_dx, "D_x");
    ou->add_option("--dp", ou_dp, "D_p");
    ou->add_option("--dxp", ou_dxp, "D_xp");
    ou->add_option("--runs", ou_runs, "Number of runs");
    ou->add_option("--t-final", ou_tf, "Final time");
    ou->add_option("--dt", ou_dt, "Euler-Maruyama step");
    ou->add_option("--record-stride", ou_stride, "Samples per emitted row");

    // fit
    auto* fi = app.add_subcommand("fit", "Extract diffusion constants from trajectories");
    fi->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string fi_input, fi_out = "fit.json";
    double fi_kappa = 0.0, fi_tmin = 0.0, fi_tmax = 5.0;
    int fi_boot = 200;
    fi->add_option("--input", fi_input, "Trajectory CSV (traj_id,t,x,p,vx,vp,cxp)")
        ->required();
    fi->add_option("--out-json", fi_out, "Output JSON path");
    fi->add_option("--kappa", fi_kappa, "Kappa tag recorded in the output");
    fi->add_option("--t-min", fi_tmin, "Fit window start");
    fi->add_option("--t-max", fi_tmax, "Fit window end");
    fi->add_option("--bootstrap", fi_boot, "Bootstrap resamples");

    // verify-me
    auto* vm = app.add_subcommand("verify-me", "Master-equation oracle run");
    vm->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    double vm_kappa = 1.0, vm_tf = 1.0, vm_window = 0.0;
    int vm_n = 128;
    std::string vm_against;
    vm->add_option("--kappa", vm_kappa, "Dimensionless kappa");
    vm->add_option("--n-grid", vm_n, "Oracle grid points (<= 256)");
    vm->add_option("--t-final", vm_tf, "Final time");
    vm->add_option("--window", vm_window, "Explicit window width");
    vm->add_option("--against", vm_against, "Directory of trajectory checkpoints");

    if (argc <= 1) {
        std::cout << app.help();
        return 0;
    }

    try {
        const auto args = merge_config_args(argc, argv);
        // CLI11 parses reversed vectors.
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const qbm::UsageError& e) {
        std::cerr << "qbm: " << e.what() << "\n";
        return 2;
    } catch (const qbm::IoError& e) {
        std::cerr << "qbm: " << e.what() << "\n";
        return 4;
    }

    try {
        if (*fp)
            return run_fixed_point(g, fp_kappa, fp_sweep);
        if (*ev)
            return run_evolve(g, ev_kappa, ev_tf, ev_dt, ev_n, ev_init, ev_sigmas,
                              ev_x0, ev_p0);
        if (*un)
            return run_unravel(g, un_cfg, un_init, un_save);
        if (*bo)
            return run_born(g, bo_weights, bo_sep, bo_kappa, bo_runs);
        if (*js)
            return run_jump_sde(g, js_kappa, js_tf, js_runs, js_dt, js_stride);
        if (*ou)
            return run_ou_sim(g, ou_dx, ou_dp, ou_dxp, ou_runs, ou_tf, ou_dt, ou_stride);
        if (*fi)
            return run_fit(g, fi_input, fi_out, fi_kappa, fi_tmin, fi_tmax, fi_boot);
        if (*vm)
            return run_verify_me(g, vm_kappa, vm_n, vm_tf, vm_against, vm_window);
        std::cout << app.help();
        return 0;
    } catch (const qbm::UsageError& e) {
        std::cerr << "qbm: " << e.what() << "\n";
        return 2;
    } catch (const qbm::IoError& e) {
        std::cerr << "qbm: " << e.what() << "\n";
        return 4;
    } catch (const qbm::NumericalError& e) {
        std::cerr << "qbm: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "qbm: " << e.what() << "\n";
        return 3;
    }
}
