#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "ivlab/error.hpp"
#include "ivlab/experiment.hpp"
#include "ivlab/flows.hpp"
#include "ivlab/freespace.hpp"
#include "ivlab/pde.hpp"

namespace fs = std::filesystem;
using namespace ivlab;

namespace {

std::string label(double nu) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", nu);
    return buf;
}

TorusGrid grid_of(const LadderConfig& c) {
    return c.domain == Domain::Torus ? TorusGrid::unit(c.N) : TorusGrid::box(c.N, c.box_length);
}

SolverSettings settings_of(const LadderConfig& c) {
    SolverSettings s;
    s.dt = c.dt;
    const auto steps = static_cast<int>(std::ceil(c.T / c.dt - 1e-9));
    s.checkpoint_every = std::max(1, steps / c.checkpoints);
    return s;
}

std::shared_ptr<const KernelPair> kernels_of(const LadderConfig& c) {
    return build_kernels(PaddedGrid::make(c.N, c.box_length), {c.box_length / 8.0, c.box_length / 4.0});
}

int simulate(const LadderConfig& c, const fs::path& out) {
    const SpectralField w0 = initial_datum(c.initial_datum, grid_of(c), c.master_seed);
    std::vector<double> nus = c.nus;
    if (c.domain == Domain::Torus) nus.push_back(0.0);
    for (double nu : nus) {
        const Trajectory tr = c.domain == Domain::Torus ? solve_vorticity(w0, nu, c.T, settings_of(c))
                                                        : solve_freespace(w0, nu, c.T, settings_of(c), kernels_of(c));
        save_trajectory(out / ("nu_" + label(nu)), tr);
        std::cout << "nu=" << label(nu) << " checkpoints=" << tr.size() << " energy(T)="
                  << energy(tr.velocity(tr.size() - 1)) << "\n";
    }
    return 0;
}

int flows(const LadderConfig& c, const fs::path& out, int threads) {
    if (c.domain != Domain::Torus) throw Error(ErrorCode::ConfigError, "flows are computed on the torus only");
    if (c.nus.empty()) throw Error(ErrorCode::ConfigError, "flows need at least one viscosity");
    const SpectralField w0 = initial_datum(c.initial_datum, grid_of(c), c.master_seed);
    const Trajectory ref = solve_vorticity(w0, 0.0, c.T, settings_of(c));
    const Trajectory tr = solve_vorticity(w0, c.nus.front(), c.T, settings_of(c));
    FlowOptions o;
    o.store_s = ref.times();
    o.threads = threads;
    const FlowEnsemble det = integrate_backward_flow(ref, c.T, c.flow_seeds, o);
    const FlowEnsemble sto = integrate_stochastic_flow(tr, c.T, c.nus.front(), c.flow_seeds, c.M, c.master_seed, o);
    save_ensemble(out / "flow_euler", det);
    save_ensemble(out / ("flow_nu_" + label(c.nus.front())), sto);
    const double eps = select_eps(c.nus.front(), l1l1_velocity_distance(tr, ref));
    const StabilityReport s = stability_report(det, sto, 0.0, eps);
    std::cout << "measure_defect=" << measure_preservation_defect(det, 16) << " eps=" << eps
              << " flow_dist=" << s.flow_distance << " q_int=" << s.q_integral
              << " chebyshev=" << (s.chebyshev_holds ? "ok" : "violated") << "\n";
    return 0;
}

int ladder(const LadderConfig& c, int threads) {
    const ConvergenceReport r = run_ladder(c, threads);
    std::cout << "rows=" << r.rows.size() << " written to " << c.output_dir << "\n";
    for (const auto& [name, ok] : r.summary.checks) std::cout << "  " << name << ": " << (ok ? "pass" : "fail") << "\n";
    return 0;
}

int serfati(const LadderConfig& c, const fs::path& out) {
    if (c.domain != Domain::FreeSpace) throw Error(ErrorCode::ConfigError, "the Serfati identity is a free-space check");
    if (c.nus.empty()) throw Error(ErrorCode::ConfigError, "serfati needs a viscosity");
    const auto kp = kernels_of(c);
    const SpectralField w0 = initial_datum(c.initial_datum, grid_of(c), c.master_seed);
    SolverSettings s = settings_of(c);
    s.checkpoint_every = 1;
    SerfatiAccumulator acc(c.nus.front());
    solve_freespace(w0, c.nus.front(), c.T, s, kp, acc.observer(), false);
    const SerfatiTerms t = serfati_rhs(acc, *kp);
    nlohmann::json j = {{"t", t.t},
                        {"nu", c.nus.front()},
                        {"N", c.N},
                        {"residual", t.residual},
                        {"u0_l2", lp_norm(t.u0, 2.0)},
                        {"near_l2", lp_norm(t.near, 2.0)},
                        {"transport_l2", lp_norm(t.transport, 2.0)},
                        {"viscous_l2", lp_norm(t.viscous, 2.0)},
                        {"u_l2", lp_norm(t.u, 2.0)},
                        {"hessian_kernel_l2", kp->hessian_l2},
                        {"laplacian_kernel_l1", kp->laplacian_l1}};
    fs::create_directories(out);
    std::ofstream(out / "serfati.json") << j.dump(2) << "\n";
    std::cout << "residual=" << t.residual << "\n";
    return 0;
}

int report(const LadderConfig& c, const fs::path& out) {
    const ConvergenceReport r = read_report_csv(out / "ladder.csv", c);
    plot_report(r, out);
    std::cout << "rows=" << r.rows.size() << ", plots written to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Vanishing-viscosity experiments for 2D incompressible flow"};
    app.require_subcommand(1);
    std::string config_path, out;
    std::uint64_t seed = 0;
    int threads = 1;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "override master_seed");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", out, "output directory (overrides output_dir)");
    };
    CLI::App* sim = app.add_subcommand("simulate", "run the solver for every viscosity and save trajectories");
    CLI::App* flo = app.add_subcommand("flows", "integrate deterministic and stochastic flows");
    CLI::App* lad = app.add_subcommand("ladder", "run a viscosity ladder and write the report");
    CLI::App* ser = app.add_subcommand("serfati", "check the Serfati identity on a free-space run");
    CLI::App* rep = app.add_subcommand("report", "redraw plots from an existing ladder.csv");
    for (CLI::App* s : {sim, flo, lad, ser, rep}) add_common(s);
    CLI11_PARSE(app, argc, argv);

    try {
        LadderConfig c = load_config(config_path);
        if (app.get_subcommands().front()->count("--seed")) c.master_seed = seed;
        if (!out.empty()) c.output_dir = out;
        const fs::path dir = c.output_dir;
        if (sim->parsed()) return simulate(c, dir);
        if (flo->parsed()) return flows(c, dir, threads);
        if (lad->parsed()) return ladder(c, threads);
        if (ser->parsed()) return serfati(c, dir);
        if (rep->parsed()) return report(c, dir);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
