// kle: command-line surface for the Komatu-Loewner toolkit.
//
// Subcommands:
//   kernel    build the BMD complex Poisson kernel for a configuration and
//             emit model JSON + sampled K* field CSV + bound-check report
//   solve     integrate a measure-driven flow (forward or reversed) and emit
//             the trajectory as CSV and JSON
//   validate  run the acceptance suite and emit a machine-readable report
//
// Exit codes: 0 ok, 1 config error, 2 numerical-tolerance failure,
// 3 solver underflow.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kle/flow.hpp"
#include "kle/kernel.hpp"
#include "kle/oracle.hpp"
#include "kle/validate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw kle::ConfigError("cannot open " + path);
    json j;
    in >> j;
    return j;
}

void write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    out << text;
}

int cmd_kernel(const std::string& config_file, double xi, int degree, double tol,
               const std::string& outdir) {
    const auto cfg_json = read_json_file(config_file);
    const auto domain = cfg_json.contains("domain") ? cfg_json["domain"] : cfg_json;
    kle::SlitConfig s = kle::SlitConfig::from_json(domain.dump());

    kle::KernelModel model;
    try {
        model = kle::build_kernel(s, xi, degree, tol);
    } catch (const kle::ResidualExceeded& e) {
        std::cerr << "kernel residual failure: " << e.what() << "\n";
        return 2;
    }
    fs::create_directories(outdir);
    write_file(fs::path(outdir) / "model.json", model.to_json());

    // sampled K* field on a rectangle around the slits
    {
        std::ofstream csv(fs::path(outdir) / "kstar_field.csv");
        csv << "x,y,kstar\n";
        const double R = std::max(3.0, 2.0 * s.r_out());
        const int n = 120;
        char buf[80];
        for (int iy = 1; iy <= n; ++iy) {
            for (int ix = 0; ix <= n; ++ix) {
                const kle::Complex z(-R + 2.0 * R * ix / n, 2.0 * R * iy / n);
                if (!s.contains(z) || std::abs(z - xi) < 1e-6) continue;
                std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", z.real(),
                              z.imag(), kle::eval_kstar(model, z));
                csv << buf << "\n";
            }
        }
    }

    const auto koebe = kle::koebe_bound_check(model, 10000, 1);
    const auto res = kle::residue_at_infinity(model, {100.0, 200.0, 400.0, 800.0});
    json rep;
    rep["schema_version"] = 1;
    rep["residual"] = model.residual;
    rep["koebe_worst_ratio"] = koebe.worst_ratio;
    rep["koebe_violated"] = koebe.violated;
    rep["residue_at_infinity"] = {res.value.real(), res.value.imag()};
    rep["residue_error_bar"] = res.error;
    rep["slit_levels"] = std::vector<double>(
        model.slit_levels.data(), model.slit_levels.data() + model.slit_levels.size());
    write_file(fs::path(outdir) / "bound_report.json", rep.dump(2));

    std::cout << "kernel model written to " << outdir << " (residual "
              << model.residual << ")\n";
    return koebe.violated ? 2 : 0;
}

int cmd_solve(const std::string& config_file, bool reverse_flag,
              const std::string& outdir, int threads) {
    (void)threads;
    const auto run = read_json_file(config_file);
    kle::SlitConfig s = kle::SlitConfig::from_json(run.at("domain").dump());
    const auto driver_spec = kle::DriverSpec::from_json(run.at("driver").dump());

    const auto solve = run.at("solve");
    const double T = solve.at("T").get<double>();
    std::vector<kle::SheetPoint> tracked;
    if (solve.contains("tracked"))
        for (const auto& p : solve["tracked"])
            tracked.push_back(kle::SheetPoint::base(
                {p.at(0).get<double>(), p.at(1).get<double>()}));
    kle::SolveOptions opts;
    if (solve.contains("rtol")) opts.rtol = solve["rtol"].get<double>();
    if (solve.contains("atol")) opts.atol = solve["atol"].get<double>();
    if (solve.contains("kernel_degree"))
        opts.kernel_degree = solve["kernel_degree"].get<int>();
    if (solve.contains("rebuild_tol"))
        opts.rebuild_tol = solve["rebuild_tol"].get<double>();
    if (solve.contains("y_floor")) opts.y_floor = solve["y_floor"].get<double>();
    bool reversed = reverse_flag;
    if (solve.contains("reverse")) reversed = solve["reverse"].get<bool>();

    const int grid_n = std::max(8, static_cast<int>(std::ceil(T / 0.01)));
    const auto driver = kle::sample(driver_spec, kle::uniform_grid(T, grid_n));

    kle::FlowTrajectory traj;
    try {
        traj = reversed ? kle::solve_reversed(s, driver, tracked, T, opts)
                        : kle::solve_forward(s, driver, tracked, T, opts);
    } catch (const kle::MinStepUnderflow& e) {
        std::cerr << "solver underflow: " << e.what() << "\n";
        return 3;
    }

    fs::create_directories(outdir);
    {
        std::ofstream csv(fs::path(outdir) / "trajectory.csv");
        traj.write_csv(csv);
    }
    write_file(fs::path(outdir) / "trajectory.json", traj.to_json());
    if (traj.absorption())
        std::cout << "absorbed at zeta=" << traj.absorption()->time << " (slit "
                  << traj.absorption()->slit << ")\n";
    std::cout << "trajectory (" << traj.steps() << " records) written to "
              << outdir << "\n";
    return 0;
}

int cmd_validate(const std::string& level, std::uint64_t seed, int threads,
                 const std::string& out) {
    const auto lvl = level == "full" ? kle::ValidationLevel::full
                                     : kle::ValidationLevel::quick;
    const auto report = kle::run_validation(lvl, seed, threads);
    for (const auto& c : report.criteria) {
        std::printf("[%s] %2d %-36s observed %.3e tol %.3e (%.1fs)%s%s\n",
                    c.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), c.observed,
                    c.tolerance, c.seconds, c.note.empty() ? "" : "  # ",
                    c.note.c_str());
    }
    std::printf("%s in %.1fs\n", report.all_pass ? "ALL PASS" : "FAILURES",
                report.seconds);
    if (!out.empty()) write_file(out, report.to_json());
    return report.all_pass ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Komatu-Loewner evolution toolkit: BMD complex Poisson kernels,\n"
        "integral representations and measure-driven flows on parallel slit\n"
        "half-planes.\n\n"
        "CSV formats:\n"
        "  trajectory.csv    t,point,re,im,sheet,alive (one row per time per\n"
        "                    tracked point; floats printed with %.17g)\n"
        "  kstar_field.csv   x,y,kstar\n"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "cap worker parallelism");

    auto* k = app.add_subcommand("kernel", "build a BMD complex Poisson kernel");
    std::string k_config, k_out = "out";
    double k_xi = 0.0, k_tol = 1e-8;
    int k_degree = 24;
    k->add_option("--config", k_config, "domain config JSON")->required();
    k->add_option("--xi", k_xi, "pole location on the boundary")->required();
    k->add_option("--degree", k_degree, "modes per slit");
    k->add_option("--tol", k_tol, "boundary residual tolerance");
    k->add_option("--out", k_out, "output directory");

    auto* sv = app.add_subcommand("solve", "integrate a measure-driven flow");
    std::string s_config, s_out = "out";
    bool s_reverse = false;
    sv->add_option("--config", s_config,
                   "run config JSON with sections {domain, driver, solve, output}")
        ->required();
    sv->add_flag("--reverse", s_reverse, "mapping-out (reversed) flow");
    sv->add_option("--out", s_out, "output directory");

    auto* v = app.add_subcommand("validate", "run the acceptance suite");
    std::string v_level = "quick", v_out;
    std::uint64_t v_seed = 1;
    v->add_option("--level", v_level, "quick | full")
        ->check(CLI::IsMember({"quick", "full"}));
    v->add_option("--seed", v_seed, "random seed");
    v->add_option("--out", v_out, "write the JSON report here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (k->parsed()) return cmd_kernel(k_config, k_xi, k_degree, k_tol, k_out);
        if (sv->parsed()) return cmd_solve(s_config, s_reverse, s_out, threads);
        if (v->parsed()) return cmd_validate(v_level, v_seed, threads, v_out);
    } catch (const kle::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const kle::ResidualExceeded& e) {
        std::cerr << "tolerance failure: " << e.what() << "\n";
        return 2;
    } catch (const kle::MinStepUnderflow& e) {
        std::cerr << "solver underflow: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
