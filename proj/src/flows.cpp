#include "ivlab/flows.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "ivlab/error.hpp"
#include "ivlab/io.hpp"
#include "ivlab/parallel.hpp"

namespace ivlab {

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double wrap_unit(double x) {
    double y = x - std::floor(x);
    return y >= 1.0 ? 0.0 : y;
}

double nearest_shift(double d) { return d - std::nearbyint(d); }

struct StepPlan {
    std::size_t steps = 0;
    double h = 0.0;
    // stored slot for each step index, or -1
    std::vector<int> slot_of_step;
    std::vector<double> s_values;
};

StepPlan plan_steps(const Trajectory& carrier, double t, const std::vector<double>& store_s) {
    const double slack = 1e-9 * std::max(1.0, carrier.final_time());
    if (t < 0.0 || t > carrier.final_time() + slack) {
        throw Error(ErrorCode::TimeRangeExceeded, "release time outside carrier range");
    }
    StepPlan p;
    p.steps = t == 0.0 ? 0 : static_cast<std::size_t>(std::ceil(t / carrier.dt() - 1e-9));
    p.h = p.steps == 0 ? 0.0 : t / static_cast<double>(p.steps);
    p.slot_of_step.assign(p.steps + 1, -1);
    std::vector<std::size_t> wanted{0, p.steps};
    for (double s : store_s) {
        if (s < -slack || s > t + slack) throw Error(ErrorCode::TimeRangeExceeded, "stored time outside [0, t]");
        if (p.steps == 0) continue;
        wanted.push_back(static_cast<std::size_t>(std::llround((t - s) / p.h)));
    }
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
    for (std::size_t j : wanted) {
        p.slot_of_step[j] = static_cast<int>(p.s_values.size());
        p.s_values.push_back(j == p.steps ? 0.0 : t - p.h * static_cast<double>(j));
    }
    return p;
}

std::vector<Point> seed_grid(int n_seed) {
    std::vector<Point> seeds(static_cast<std::size_t>(n_seed) * n_seed);
    for (int i = 0; i < n_seed; ++i)
        for (int j = 0; j < n_seed; ++j)
            seeds[static_cast<std::size_t>(i) * n_seed + j] = {static_cast<double>(i) / n_seed,
                                                               static_cast<double>(j) / n_seed};
    return seeds;
}

void check_seed_count(int n_seed) {
    if (n_seed < 1) throw Error(ErrorCode::BadParams, "seed grid must be nonempty");
}

}  // namespace

TorusPoint TorusPoint::wrap(double x1, double x2) { return {wrap_unit(x1), wrap_unit(x2)}; }

Point geodesic_displacement(TorusPoint x, TorusPoint y) {
    return {nearest_shift(y.x1 - x.x1), nearest_shift(y.x2 - x.x2)};
}

double geodesic_distance(TorusPoint x, TorusPoint y) {
    const Point d = geodesic_displacement(x, y);
    return std::hypot(d.x1, d.x2);
}

StreamRng::StreamRng(std::uint64_t master, std::uint64_t seed_index, std::uint64_t replica)
    : state_(mix64(mix64(mix64(master ^ 0x6A09E667F3BCC909ULL) + seed_index) ^ (replica * 0x9E3779B97F4A7C15ULL))) {}

StreamRng::result_type StreamRng::operator()() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
}

FlowEnsemble::FlowEnsemble(int n_seed, double t, double nu, int replicas, std::uint64_t master_seed,
                           bool stochastic, std::vector<double> s_values, std::vector<std::vector<Point>> lifts)
    : n_seed_(n_seed), t_(t), nu_(nu), replicas_(replicas), master_seed_(master_seed), stochastic_(stochastic),
      s_values_(std::move(s_values)), lifts_(std::move(lifts)) {
    if (s_values_.size() != lifts_.size()) throw Error(ErrorCode::ShapeMismatch, "one position set per stored s");
    for (const auto& l : lifts_) {
        if (l.size() != seed_count() * static_cast<std::size_t>(replicas_)) {
            throw Error(ErrorCode::ShapeMismatch, "position count must be seeds * replicas");
        }
    }
}

FlowEnsemble FlowEnsemble::from_positions(int n_seed, double t, std::vector<Point> endpoints) {
    check_seed_count(n_seed);
    if (!(t > 0.0)) throw Error(ErrorCode::BadParams, "release time must be positive");
    std::vector<std::vector<Point>> lifts{seed_grid(n_seed), std::move(endpoints)};
    return FlowEnsemble(n_seed, t, 0.0, 1, 0, false, {t, 0.0}, std::move(lifts));
}

Point FlowEnsemble::seed(std::size_t i) const {
    const auto n = static_cast<std::size_t>(n_seed_);
    return {static_cast<double>(i / n) / n_seed_, static_cast<double>(i % n) / n_seed_};
}

std::size_t FlowEnsemble::s_index(double s) const {
    for (std::size_t k = 0; k < s_values_.size(); ++k)
        if (std::abs(s_values_[k] - s) <= 1e-9 * std::max(1.0, t_)) return k;
    throw Error(ErrorCode::TimeRangeExceeded, "time " + std::to_string(s) + " not stored in ensemble");
}

FlowEnsemble integrate_backward_flow(const Trajectory& carrier, double t, int n_seed, const FlowOptions& options) {
    check_seed_count(n_seed);
    const StepPlan plan = plan_steps(carrier, t, options.store_s);
    const std::vector<Point> seeds = seed_grid(n_seed);
    std::vector<std::vector<Point>> lifts(plan.s_values.size(), std::vector<Point>(seeds.size()));
    const double h = plan.h;
    parallel_for(seeds.size(), options.threads, [&](std::size_t i) {
        Point x = seeds[i];
        lifts[0][i] = x;
        for (std::size_t j = 0; j < plan.steps; ++j) {
            const double s = t - h * static_cast<double>(j);
            const double s_half = s - 0.5 * h;
            const double s_next = j + 1 == plan.steps ? 0.0 : s - h;
            const auto k1 = carrier.sample_velocity(s, x);
            const auto k2 = carrier.sample_velocity(s_half, {x.x1 - 0.5 * h * k1[0], x.x2 - 0.5 * h * k1[1]});
            const auto k3 = carrier.sample_velocity(s_half, {x.x1 - 0.5 * h * k2[0], x.x2 - 0.5 * h * k2[1]});
            const auto k4 = carrier.sample_velocity(s_next, {x.x1 - h * k3[0], x.x2 - h * k3[1]});
            x.x1 -= h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            x.x2 -= h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
            if (const int slot = plan.slot_of_step[j + 1]; slot >= 0) lifts[slot][i] = x;
        }
    });
    return FlowEnsemble(n_seed, t, 0.0, 1, 0, false, plan.s_values, std::move(lifts));
}

FlowEnsemble integrate_stochastic_flow(const Trajectory& carrier, double t, double nu, int n_seed, int replicas,
                                       std::uint64_t master_seed, const FlowOptions& options) {
    check_seed_count(n_seed);
    if (!(nu > 0.0)) throw Error(ErrorCode::BadParams, "stochastic flow needs nu > 0");
    if (replicas < 1) throw Error(ErrorCode::BadParams, "need at least one replica");
    const StepPlan plan = plan_steps(carrier, t, options.store_s);
    const std::vector<Point> seeds = seed_grid(n_seed);
    const auto m = static_cast<std::size_t>(replicas);
    std::vector<std::vector<Point>> lifts(plan.s_values.size(), std::vector<Point>(seeds.size() * m));
    const double h = plan.h;
    const double sigma = std::sqrt(2.0 * nu * h);
    parallel_for(seeds.size(), options.threads, [&](std::size_t i) {
        for (std::size_t r = 0; r < m; ++r) {
            StreamRng rng(master_seed, i, r);
            std::normal_distribution<double> gauss;
            Point x = seeds[i];
            lifts[0][i * m + r] = x;
            for (std::size_t j = 0; j < plan.steps; ++j) {
                const double s = t - h * static_cast<double>(j);
                const auto v = carrier.sample_velocity(s, x);
                const double g1 = gauss(rng);
                const double g2 = gauss(rng);
                x.x1 += -h * v[0] + sigma * g1;
                x.x2 += -h * v[1] + sigma * g2;
                if (const int slot = plan.slot_of_step[j + 1]; slot >= 0) lifts[slot][i * m + r] = x;
            }
        }
    });
    return FlowEnsemble(n_seed, t, nu, replicas, master_seed, true, plan.s_values, std::move(lifts));
}

SpectralField lagrangian_vorticity(const SpectralField& omega0, const FlowEnsemble& flow) {
    if (flow.stochastic()) {
        throw Error(ErrorCode::StochasticFlowNotAllowed, "use feynman_kac_vorticity for stochastic flows");
    }
    const std::size_t k = flow.s_index(0.0);
    const TorusGrid out = TorusGrid::unit(flow.n_seed());
    std::vector<double> v(flow.seed_count());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Point x = flow.lift(k, i);
        v[i] = sample_at(omega0, {x.x1, x.x2});
    }
    return SpectralField(out, std::move(v));
}

FeynmanKacField feynman_kac_vorticity(const SpectralField& omega0, const FlowEnsemble& flow, int threads) {
    if (!flow.stochastic()) {
        throw Error(ErrorCode::DeterministicFlowNotAllowed, "use lagrangian_vorticity for deterministic flows");
    }
    const std::size_t k = flow.s_index(0.0);
    const TorusGrid out = TorusGrid::unit(flow.n_seed());
    const auto m = static_cast<std::size_t>(flow.replicas());
    std::vector<double> mean(flow.seed_count()), err(flow.seed_count());
    const TorusGrid& g = omega0.grid();
    const auto values = omega0.values();
    parallel_for(flow.seed_count(), threads, [&](std::size_t i) {
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            const Point x = flow.lift(k, i, static_cast<int>(r));
            const double f = bilinear(values, g.n, (x.x1 - g.origin) / g.spacing(), (x.x2 - g.origin) / g.spacing());
            sum += f;
            sum_sq += f * f;
        }
        const double mu = sum / static_cast<double>(m);
        mean[i] = mu;
        if (m > 1) {
            const double var = std::max(0.0, (sum_sq - static_cast<double>(m) * mu * mu) / static_cast<double>(m - 1));
            err[i] = std::sqrt(var / static_cast<double>(m));
        }
    });
    double avg = 0.0;
    for (double e : err) avg += e;
    avg /= static_cast<double>(err.size());
    return {SpectralField(out, std::move(mean)), SpectralField(out, std::move(err)), avg};
}

double measure_preservation_defect(const FlowEnsemble& flow, int cells) {
    if (cells < 1) throw Error(ErrorCode::BadParams, "need at least one cell");
    const std::size_t k = flow.s_index(0.0);
    const auto& pts = flow.lifts(k);
    std::vector<std::size_t> count(static_cast<std::size_t>(cells) * cells, 0);
    for (const Point& p : pts) {
        const TorusPoint q = TorusPoint::wrap(p);
        const int a = std::min(cells - 1, static_cast<int>(q.x1 * cells));
        const int b = std::min(cells - 1, static_cast<int>(q.x2 * cells));
        ++count[static_cast<std::size_t>(a) * cells + b];
    }
    const double uniform = static_cast<double>(pts.size()) / static_cast<double>(count.size());
    double worst = 0.0;
    for (std::size_t c : count) worst = std::max(worst, std::abs(static_cast<double>(c) - uniform) / uniform);
    return worst;
}

void save_ensemble(const std::filesystem::path& dir, const FlowEnsemble& flow) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["t"] = flow.t();
    manifest["nu"] = flow.nu();
    manifest["M"] = flow.replicas();
    manifest["master_seed"] = flow.master_seed();
    manifest["s_values"] = flow.s_values();
    manifest["n_seed"] = flow.n_seed();
    manifest["stochastic"] = flow.stochastic();
    std::ofstream out(dir / "positions.ivlb", std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write ensemble in " + dir.string());
    const auto n = static_cast<std::uint32_t>(flow.n_seed());
    std::vector<double> buf(flow.seed_count());
    // record order: s slot, replica, coordinate
    for (std::size_t k = 0; k < flow.s_values().size(); ++k)
        for (int r = 0; r < flow.replicas(); ++r)
            for (int c = 0; c < 2; ++c) {
                for (std::size_t i = 0; i < buf.size(); ++i) {
                    const Point p = flow.lift(k, i, r);
                    buf[i] = c == 0 ? p.x1 : p.x2;
                }
                write_record(out, n, PayloadKind::Positions, buf);
            }
    std::ofstream man(dir / "manifest.json");
    man << manifest.dump(2) << '\n';
}

FlowEnsemble load_ensemble(const std::filesystem::path& dir) {
    std::ifstream man(dir / "manifest.json");
    if (!man) throw Error(ErrorCode::IoError, "missing manifest in " + dir.string());
    nlohmann::json manifest;
    try {
        man >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, e.what());
    }
    const int n_seed = manifest.at("n_seed").get<int>();
    const int replicas = manifest.at("M").get<int>();
    auto s_values = manifest.at("s_values").get<std::vector<double>>();
    std::ifstream in(dir / "positions.ivlb", std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "missing positions in " + dir.string());
    const std::size_t seeds = static_cast<std::size_t>(n_seed) * n_seed;
    const auto m = static_cast<std::size_t>(replicas);
    std::vector<std::vector<Point>> lifts(s_values.size(), std::vector<Point>(seeds * m));
    for (std::size_t k = 0; k < s_values.size(); ++k)
        for (std::size_t r = 0; r < m; ++r) {
            const RawRecord a = read_record(in);
            const RawRecord b = read_record(in);
            if (a.n != static_cast<std::uint32_t>(n_seed) || b.n != a.n) {
                throw Error(ErrorCode::FormatError, "ensemble record has wrong size");
            }
            for (std::size_t i = 0; i < seeds; ++i) lifts[k][i * m + r] = {a.values[i], b.values[i]};
        }
    return FlowEnsemble(n_seed, manifest.at("t").get<double>(), manifest.at("nu").get<double>(), replicas,
                        manifest.at("master_seed").get<std::uint64_t>(), manifest.at("stochastic").get<bool>(),
                        std::move(s_values), std::move(lifts));
}

}  // namespace ivlab
