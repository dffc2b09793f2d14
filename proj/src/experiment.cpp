#include "ivlab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "ivlab/error.hpp"
#include "ivlab/flows.hpp"
#include "ivlab/freespace.hpp"
#include "ivlab/parallel.hpp"
#include "ivlab/pde.hpp"
#include "ivlab/smoothstep.hpp"

namespace ivlab {

namespace {

using nlohmann::json;

constexpr double kPi = std::numbers::pi;

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (!allowed.contains(key)) config_error("unknown key '" + key + "' in " + where);
    }
}

template <class T>
T get(const json& j, const std::string& key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        config_error("bad value for '" + key + "' in " + where + ": " + e.what());
    }
}

double parse_p(const json& v) {
    if (v.is_string()) {
        if (v.get<std::string>() == "inf") return kInfinity;
        config_error("p_list entries are numbers or \"inf\"");
    }
    if (!v.is_number()) config_error("p_list entries are numbers or \"inf\"");
    return v.get<double>();
}

json p_to_json(double p) { return std::isinf(p) ? json("inf") : json(p); }

// Allowed parameters per datum.
const std::map<std::string, std::set<std::string>>& datum_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"taylor-green", {"A"}},
        {"shear", {"A", "k"}},
        {"random-smooth", {"amplitude", "kmax", "seed"}},
        {"vortex-patch", {"radius", "strength", "c1", "c2"}},
        {"dipole", {"separation", "sigma", "strength"}},
        {"lp-singular", {"p", "alpha", "cap", "c1", "c2", "separation", "radius"}},
    };
    return keys;
}

double param(const DatumSpec& s, const std::string& key, double fallback) {
    const auto it = s.params.find(key);
    return it == s.params.end() ? fallback : it->second;
}

bool is_box(const TorusGrid& g) { return std::abs(g.origin + g.length / 2.0) <= 1e-12 * g.length; }

// Singular exponent and its integrability exponent p: alpha defaults to 90% of 2/p.
std::pair<double, double> singular_exponents(const DatumSpec& s) {
    const double p = param(s, "p", 1.2);
    if (!(p >= 1.0) || std::isinf(p)) throw Error(ErrorCode::BadParams, "lp-singular needs a finite p >= 1");
    const double alpha = param(s, "alpha", 0.9 * 2.0 / p);
    if (!(alpha > 0.0)) throw Error(ErrorCode::BadParams, "lp-singular needs alpha > 0");
    if (!(alpha * p < 2.0)) {
        throw Error(ErrorCode::BadParams, "datum not in L^p: alpha * p = " + std::to_string(alpha * p) + " >= 2");
    }
    return {alpha, p};
}

SpectralField minus_mean(const SpectralField& f) {
    const double m = f.mean();
    return map_values(f, [m](double v) { return v - m; });
}

// Periodic displacement on the unit torus, in [-1/2, 1/2).
double wrap_delta(double d) { return d - std::floor(d + 0.5); }

// Fraction of the cell around (x, y) inside the predicate, by 8 x 8 subsampling.
template <class Inside>
double cell_fraction(double x, double y, double h, Inside inside) {
    constexpr int sub = 8;
    int hits = 0;
    for (int p = 0; p < sub; ++p)
        for (int q = 0; q < sub; ++q)
            if (inside(x + h * ((p + 0.5) / sub - 0.5), y + h * ((q + 0.5) / sub - 0.5))) ++hits;
    return static_cast<double>(hits) / (sub * sub);
}

SpectralField torus_datum(const DatumSpec& s, const TorusGrid& g, std::uint64_t master_seed) {
    const std::string& name = s.name;
    if (name == "taylor-green") {
        const double A = param(s, "A", 1.0);
        return SpectralField::from_function(
            g, [A](double x, double y) { return A * std::sin(2 * kPi * x) * std::sin(2 * kPi * y); });
    }
    if (name == "shear") {
        const double A = param(s, "A", 1.0), k = std::round(param(s, "k", 1.0));
        if (k < 1.0) throw Error(ErrorCode::BadParams, "shear wavenumber must be >= 1");
        return SpectralField::from_function(g, [A, k](double x, double) { return A * std::sin(2 * kPi * k * x); });
    }
    if (name == "random-smooth") {
        const double amp = param(s, "amplitude", 1.0);
        const int kmax = static_cast<int>(param(s, "kmax", 4.0));
        if (kmax < 1 || 3 * kmax > g.n) throw Error(ErrorCode::BadParams, "kmax must lie in [1, n/3]");
        StreamRng rng(master_seed, static_cast<std::uint64_t>(param(s, "seed", 0.0)), 0);
        std::normal_distribution<double> normal;
        struct Mode {
            int k1, k2;
            double a, b;
        };
        std::vector<Mode> modes;
        for (int k1 = 0; k1 <= kmax; ++k1)
            for (int k2 = -kmax; k2 <= kmax; ++k2) {
                if (k1 == 0 && k2 <= 0) continue;
                const double w = amp / (1.0 + k1 * k1 + k2 * k2);
                const double a = w * normal(rng);
                const double b = w * normal(rng);
                modes.push_back({k1, k2, a, b});
            }
        return SpectralField::from_function(g, [modes](double x, double y) {
            double v = 0.0;
            for (const Mode& m : modes) {
                const double ph = 2 * kPi * (m.k1 * x + m.k2 * y);
                v += m.a * std::cos(ph) + m.b * std::sin(ph);
            }
            return v;
        });
    }
    if (name == "vortex-patch") {
        const double a = param(s, "radius", 0.2), str = param(s, "strength", 1.0);
        const double c1 = param(s, "c1", 0.5), c2 = param(s, "c2", 0.5);
        if (!(a > 0.0 && a < 0.5)) throw Error(ErrorCode::BadParams, "patch radius must lie in (0, 1/2)");
        const double h = g.spacing();
        return minus_mean(SpectralField::from_function(g, [=](double x, double y) {
            return str * cell_fraction(x, y, h, [=](double px, double py) {
                       return std::hypot(wrap_delta(px - c1), wrap_delta(py - c2)) < a;
                   });
        }));
    }
    if (name == "dipole") {
        const double sep = param(s, "separation", 0.3), sig = param(s, "sigma", 0.08), str = param(s, "strength", 5.0);
        if (!(sig > 0.0 && sep > 0.0 && sep < 0.5)) throw Error(ErrorCode::BadParams, "dipole needs sigma > 0, sep in (0, 1/2)");
        auto bump = [sig](double dx, double dy) {
            const double r2 = wrap_delta(dx) * wrap_delta(dx) + wrap_delta(dy) * wrap_delta(dy);
            return std::exp(-r2 / (sig * sig));
        };
        return minus_mean(SpectralField::from_function(g, [=](double x, double y) {
            return str * (bump(x - 0.5 - sep / 2, y - 0.5) - bump(x - 0.5 + sep / 2, y - 0.5));
        }));
    }
    if (name == "lp-singular") {
        const auto [alpha, p] = singular_exponents(s);
        const double cap = param(s, "cap", std::pow(g.spacing(), -alpha));
        const double c1 = param(s, "c1", 0.5), c2 = param(s, "c2", 0.5);
        return minus_mean(SpectralField::from_function(g, [=](double x, double y) {
            const double d = std::hypot(wrap_delta(x - c1), wrap_delta(y - c2));
            return d == 0.0 ? cap : std::min(std::pow(d, -alpha), cap);
        }));
    }
    throw Error(ErrorCode::UnknownDatum, "unknown datum '" + name + "'");
}

// Free-space data are compactly supported and carry no net circulation.
SpectralField box_datum(const DatumSpec& s, const TorusGrid& g, std::uint64_t master_seed) {
    const std::string& name = s.name;
    const double R = g.length / 4.0;
    if (name == "taylor-green" || name == "shear") {
        throw Error(ErrorCode::BadParams, name + " is periodic and has no free-space version");
    }
    if (name == "random-smooth") {
        const double amp = param(s, "amplitude", 1.0);
        const int kmax = static_cast<int>(param(s, "kmax", 4.0));
        if (kmax < 1) throw Error(ErrorCode::BadParams, "kmax must be >= 1");
        StreamRng rng(master_seed, static_cast<std::uint64_t>(param(s, "seed", 0.0)), 0);
        std::normal_distribution<double> normal;
        std::vector<std::array<double, 4>> modes;
        for (int k1 = 0; k1 <= kmax; ++k1)
            for (int k2 = -kmax; k2 <= kmax; ++k2) {
                if (k1 == 0 && k2 <= 0) continue;
                const double w = amp / (1.0 + k1 * k1 + k2 * k2);
                const double a = w * normal(rng);
                const double b = w * normal(rng);
                modes.push_back({double(k1), double(k2), a, b});
            }
        const double sig = 0.2 * R;
        auto env = [sig](double x, double y) { return std::exp(-(x * x + y * y) / (sig * sig)); };
        const SpectralField raw = SpectralField::from_function(g, [=](double x, double y) {
            double v = 0.0;
            for (const auto& m : modes) {
                const double ph = kPi * (m[0] * x + m[1] * y) / R;
                v += m[2] * std::cos(ph) + m[3] * std::sin(ph);
            }
            return v * env(x, y);
        });
        const SpectralField e = SpectralField::from_function(g, env);
        const double ratio = raw.mean() / e.mean();
        return raw - ratio * e;
    }
    if (name == "vortex-patch") {
        // Patch of radius a shielded by an opposite ring out to a sqrt(2).
        const double a = param(s, "radius", 0.3 * R), str = param(s, "strength", 1.0);
        const double c1 = param(s, "c1", 0.0), c2 = param(s, "c2", 0.0);
        if (!(a > 0.0) || std::hypot(c1, c2) + a * std::sqrt(2.0) >= R) {
            throw Error(ErrorCode::BadParams, "patch must fit inside a quarter of the box");
        }
        const double h = g.spacing();
        const SpectralField core = SpectralField::from_function(g, [=](double x, double y) {
            return cell_fraction(x, y, h, [=](double px, double py) { return std::hypot(px - c1, py - c2) < a; });
        });
        const SpectralField ring = SpectralField::from_function(g, [=](double x, double y) {
            return cell_fraction(x, y, h, [=](double px, double py) {
                const double r = std::hypot(px - c1, py - c2);
                return r >= a && r < a * std::sqrt(2.0);
            });
        });
        return str * (core - (core.mean() / ring.mean()) * ring);
    }
    if (name == "dipole") {
        const double sep = param(s, "separation", 0.5), sig = param(s, "sigma", 0.12), str = param(s, "strength", 5.0);
        if (!(sig > 0.0 && sep > 0.0) || sep / 2 + 5 * sig >= R) {
            throw Error(ErrorCode::BadParams, "dipole must fit inside a quarter of the box");
        }
        auto bump = [sig](double dx, double dy) { return std::exp(-(dx * dx + dy * dy) / (sig * sig)); };
        return SpectralField::from_function(g, [=](double x, double y) {
            return str * (bump(x - sep / 2, y) - bump(x + sep / 2, y));
        });
    }
    if (name == "lp-singular") {
        // Opposite capped singular vortices, each cut off smoothly at `radius`.
        const auto [alpha, p] = singular_exponents(s);
        const double cap = param(s, "cap", std::pow(g.spacing(), -alpha));
        const double sep = param(s, "separation", 0.6 * R), rad = param(s, "radius", 0.25 * R);
        if (!(rad > 0.0) || sep / 2 + rad >= R || rad > sep / 2) {
            throw Error(ErrorCode::BadParams, "singular vortices must be disjoint and inside a quarter of the box");
        }
        auto vortex = [=](double dx, double dy) {
            const double d = std::hypot(dx, dy);
            const double core = d == 0.0 ? cap : std::min(std::pow(d, -alpha), cap);
            return core * (1.0 - smoothstep((d - 0.5 * rad) / (0.5 * rad)));
        };
        return SpectralField::from_function(g, [=](double x, double y) {
            return vortex(x - sep / 2, y) - vortex(x + sep / 2, y);
        });
    }
    throw Error(ErrorCode::UnknownDatum, "unknown datum '" + name + "'");
}

}  // namespace

SpectralField initial_datum(const DatumSpec& spec, const TorusGrid& grid, std::uint64_t master_seed) {
    const auto& keys = datum_keys();
    const auto it = keys.find(spec.name);
    if (it == keys.end()) throw Error(ErrorCode::UnknownDatum, "unknown datum '" + spec.name + "'");
    for (const auto& [k, v] : spec.params) {
        if (!it->second.contains(k)) throw Error(ErrorCode::BadParams, "datum '" + spec.name + "' has no parameter '" + k + "'");
        if (!std::isfinite(v)) throw Error(ErrorCode::BadParams, "parameter '" + k + "' must be finite");
    }
    return is_box(grid) ? box_datum(spec, grid, master_seed) : torus_datum(spec, grid, master_seed);
}

void validate_config(const LadderConfig& c) {
    for (std::size_t i = 0; i < c.nus.size(); ++i) {
        if (!(c.nus[i] > 0.0)) config_error("viscosities must be positive");
        if (i > 0 && !(c.nus[i] < c.nus[i - 1])) config_error("viscosities must be strictly decreasing");
    }
    if (!(c.T > 0.0)) config_error("T must be positive");
    if (!(c.dt > 0.0)) config_error("dt must be positive");
    if (c.N < 8 || (c.N & (c.N - 1)) != 0) config_error("N must be a power of two >= 8");
    if (c.p_list.empty()) config_error("p_list must not be empty");
    for (double p : c.p_list)
        if (!(p >= 1.0)) config_error("p_list entries must lie in [1, inf]");
    if (c.M < 1) config_error("M must be >= 1");
    if (c.checkpoints < 1) config_error("checkpoints must be >= 1");
    if (c.flow_seeds < 2) config_error("flow_seeds must be >= 2");
    if (!(c.box_length > 0.0)) config_error("box_length must be positive");
    if (!(c.beta_eta > 0.0)) config_error("beta_eta must be positive");
    if (c.checks.stability && !c.checks.flows) config_error("stability needs flows");
    if (c.domain == Domain::FreeSpace && c.checks.flows) config_error("flows are computed on the torus only");
    if (c.domain == Domain::FreeSpace && c.checks.resolution_doubling) {
        config_error("resolution doubling is a torus reference check");
    }
    if (c.checks.enstrophy_bound && !(c.bound_p > 1.0 && c.bound_p < 2.0)) config_error("enstrophy bound needs p in (1, 2)");
    if (c.checks.energy_sandwich && !(c.bound_p > 1.0 && c.bound_p < 1.5)) config_error("energy sandwich needs p in (1, 1.5)");
    const auto& keys = datum_keys();
    const auto it = keys.find(c.initial_datum.name);
    if (it == keys.end()) config_error("unknown datum '" + c.initial_datum.name + "'");
    for (const auto& [k, v] : c.initial_datum.params) {
        if (!it->second.contains(k)) config_error("datum '" + c.initial_datum.name + "' has no parameter '" + k + "'");
    }
    if (c.initial_datum.name == "lp-singular") {
        try {
            singular_exponents(c.initial_datum);
        } catch (const Error& e) {
            config_error(e.what());
        }
    }
    if (c.domain == Domain::FreeSpace && (c.initial_datum.name == "taylor-green" || c.initial_datum.name == "shear")) {
        config_error(c.initial_datum.name + " has no free-space version");
    }
}

LadderConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        config_error(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) config_error("config must be a JSON object");
    reject_unknown(j,
                   {"domain", "initial_datum", "nus", "T", "N", "dt", "p_list", "M", "master_seed", "checks",
                    "output_dir", "checkpoints", "flow_seeds", "bound_p", "box_length", "beta_eta"},
                   "config");
    LadderConfig c;
    if (j.contains("domain")) {
        const auto d = get<std::string>(j, "domain", "config");
        if (d == "torus") c.domain = Domain::Torus;
        else if (d == "freespace") c.domain = Domain::FreeSpace;
        else config_error("domain must be 'torus' or 'freespace'");
    }
    if (!j.contains("initial_datum")) config_error("missing 'initial_datum'");
    const json& datum = j.at("initial_datum");
    if (!datum.is_object()) config_error("initial_datum must be an object");
    reject_unknown(datum, {"name", "params"}, "initial_datum");
    c.initial_datum.name = get<std::string>(datum, "name", "initial_datum");
    if (datum.contains("params")) {
        const json& params = datum.at("params");
        if (!params.is_object()) config_error("initial_datum.params must be an object");
        for (const auto& [k, v] : params.items()) {
            if (!v.is_number()) config_error("datum parameter '" + k + "' must be a number");
            c.initial_datum.params[k] = v.get<double>();
        }
    }
    if (!j.contains("nus")) config_error("missing 'nus'");
    c.nus = get<std::vector<double>>(j, "nus", "config");
    if (j.contains("T")) c.T = get<double>(j, "T", "config");
    if (j.contains("N")) c.N = get<int>(j, "N", "config");
    if (j.contains("dt")) c.dt = get<double>(j, "dt", "config");
    if (j.contains("p_list")) {
        if (!j.at("p_list").is_array()) config_error("p_list must be an array");
        c.p_list.clear();
        for (const auto& v : j.at("p_list")) c.p_list.push_back(parse_p(v));
    }
    if (j.contains("M")) c.M = get<int>(j, "M", "config");
    if (j.contains("master_seed")) c.master_seed = get<std::uint64_t>(j, "master_seed", "config");
    if (j.contains("checks")) {
        const json& ch = j.at("checks");
        if (!ch.is_object()) config_error("checks must be an object");
        reject_unknown(ch,
                       {"flows", "stability", "renormalization", "enstrophy_bound", "energy_sandwich",
                        "resolution_doubling"},
                       "checks");
        auto flag = [&](const char* key, bool& out) {
            if (ch.contains(key)) out = get<bool>(ch, key, "checks");
        };
        flag("flows", c.checks.flows);
        flag("stability", c.checks.stability);
        flag("renormalization", c.checks.renormalization);
        flag("enstrophy_bound", c.checks.enstrophy_bound);
        flag("energy_sandwich", c.checks.energy_sandwich);
        flag("resolution_doubling", c.checks.resolution_doubling);
    }
    if (j.contains("output_dir")) c.output_dir = get<std::string>(j, "output_dir", "config");
    if (j.contains("checkpoints")) c.checkpoints = get<int>(j, "checkpoints", "config");
    if (j.contains("flow_seeds")) c.flow_seeds = get<int>(j, "flow_seeds", "config");
    if (j.contains("bound_p")) c.bound_p = get<double>(j, "bound_p", "config");
    if (j.contains("box_length")) c.box_length = get<double>(j, "box_length", "config");
    if (j.contains("beta_eta")) c.beta_eta = get<double>(j, "beta_eta", "config");
    validate_config(c);
    return c;
}

LadderConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const LadderConfig& c) {
    json j;
    j["domain"] = c.domain == Domain::Torus ? "torus" : "freespace";
    json params = json::object();
    for (const auto& [k, v] : c.initial_datum.params) params[k] = v;
    j["initial_datum"] = {{"name", c.initial_datum.name}, {"params", params}};
    j["nus"] = c.nus;
    j["T"] = c.T;
    j["N"] = c.N;
    j["dt"] = c.dt;
    json ps = json::array();
    for (double p : c.p_list) ps.push_back(p_to_json(p));
    j["p_list"] = ps;
    j["M"] = c.M;
    j["master_seed"] = c.master_seed;
    j["checks"] = {{"flows", c.checks.flows},
                   {"stability", c.checks.stability},
                   {"renormalization", c.checks.renormalization},
                   {"enstrophy_bound", c.checks.enstrophy_bound},
                   {"energy_sandwich", c.checks.energy_sandwich},
                   {"resolution_doubling", c.checks.resolution_doubling}};
    j["output_dir"] = c.output_dir;
    j["checkpoints"] = c.checkpoints;
    j["flow_seeds"] = c.flow_seeds;
    j["bound_p"] = c.bound_p;
    j["box_length"] = c.box_length;
    j["beta_eta"] = c.beta_eta;
    return j.dump(2);
}

namespace {

struct RunPlan {
    SolverSettings settings;
};

// Checkpoints every floor(steps / checkpoints) steps; a refined run keeps the same times.
RunPlan plan_run(const LadderConfig& c, int refine) {
    RunPlan r;
    r.settings.dt = c.dt / refine;
    const std::size_t base = static_cast<std::size_t>(std::ceil(c.T / c.dt - 1e-9));
    r.settings.checkpoint_every = static_cast<int>(std::max<std::size_t>(1, base / static_cast<std::size_t>(c.checkpoints))) * refine;
    r.settings.dealias = true;
    return r;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return true;
}

std::optional<RateFit> try_fit(const std::vector<double>& nus, const std::vector<double>& errs, FitMode mode) {
    try {
        return fit_rate(nus, errs, mode);
    } catch (const Error&) {
        return std::nullopt;
    }
}

}  // namespace

ConvergenceReport run_ladder(const LadderConfig& config, int threads) {
    validate_config(config);
    ConvergenceReport report;
    report.config = config;
    const bool torus = config.domain == Domain::Torus;
    const std::size_t nn = config.nus.size();
    const std::size_t np = config.p_list.size();
    try {
        const TorusGrid grid = torus ? TorusGrid::unit(config.N) : TorusGrid::box(config.N, config.box_length);
        const SpectralField omega0 = initial_datum(config.initial_datum, grid, config.master_seed);

        std::shared_ptr<const KernelPair> kernels;
        if (!torus) {
            kernels = build_kernels(PaddedGrid::make(config.N, config.box_length),
                                    {config.box_length / 8.0, config.box_length / 4.0});
        }

        // Entries: one per nu, then the torus Euler reference and its refinement.
        std::vector<double> run_nu = config.nus;
        std::vector<int> refine(nn, 1);
        if (torus) {
            run_nu.push_back(0.0);
            refine.push_back(1);
            if (config.checks.resolution_doubling) {
                run_nu.push_back(0.0);
                refine.push_back(2);
            }
        }
        std::vector<Trajectory> runs(run_nu.size());
        parallel_for(runs.size(), threads, [&](std::size_t i) {
            if (refine[i] == 1) {
                const RunPlan p = plan_run(config, 1);
                runs[i] = torus ? solve_vorticity(omega0, run_nu[i], config.T, p.settings)
                                : solve_freespace(omega0, run_nu[i], config.T, p.settings, kernels);
            } else {
                const TorusGrid fine = TorusGrid::unit(2 * config.N);
                const SpectralField w0 = initial_datum(config.initial_datum, fine, config.master_seed);
                runs[i] = solve_vorticity(w0, 0.0, config.T, plan_run(config, 2).settings);
            }
        });
        if (nn == 0) {
            report.complete = true;
            if (!config.output_dir.empty()) emit_report(report, config.output_dir);
            return report;
        }
        const Trajectory& ref = torus ? runs[nn] : runs[nn - 1];
        const std::size_t nck = ref.size();

        if (torus && config.checks.resolution_doubling) {
            const std::vector<double> d = lp_errors(ref, runs[nn + 1], config.p_list.front());
            report.summary.resolution_discrepancy = *std::max_element(d.begin(), d.end());
        }

        std::optional<FlowEnsemble> det;
        FlowOptions fopts;
        fopts.store_s = ref.times();
        fopts.threads = threads;
        if (config.checks.flows) det = integrate_backward_flow(ref, config.T, config.flow_seeds, fopts);

        struct Entry {
            std::vector<ReportRow> rows;
            double eps = nan();
            bool chebyshev = true, enstrophy = true, energy = true, renorm = true;
            double drop = 0.0;
        };
        std::vector<Entry> entries(nn);
        const Beta beta = Beta::shifted_convex(config.beta_eta);
        parallel_for(nn, threads, [&](std::size_t e) {
            const Trajectory& tr = runs[e];
            const double nu = config.nus[e];
            Entry& out = entries[e];
            std::vector<std::vector<double>> errs(np);
            for (std::size_t q = 0; q < np; ++q) errs[q] = lp_errors(tr, ref, config.p_list[q]);
            const std::vector<double> verr = velocity_l2_errors(tr, ref);

            std::optional<FlowEnsemble> stoch;
            if (config.checks.flows) {
                out.eps = select_eps(nu, l1l1_velocity_distance(tr, ref));
                FlowOptions o = fopts;
                o.threads = 1;
                stoch = integrate_stochastic_flow(tr, config.T, nu, config.flow_seeds, config.M, config.master_seed, o);
            }
            std::optional<RenormalizationResult> ren;
            if (config.checks.renormalization) {
                ren = renormalization_defect(tr, beta);
                out.renorm = ren->nonincreasing;
            }
            std::optional<BoundCheck> ens;
            if (config.checks.enstrophy_bound) {
                ens = enstrophy_bound_check(tr, config.bound_p);
                out.enstrophy = ens->holds;
            }
            std::optional<EnergySandwich> eng;
            const double e0 = energy(tr.velocity(0));
            if (config.checks.energy_sandwich) {
                eng = energy_drop_check(tr, config.bound_p);
                out.energy = eng->holds;
            }
            out.drop = e0 - energy(tr.velocity(tr.size() - 1));

            for (std::size_t k = 0; k < nck; ++k) {
                ReportRow row;
                row.nu = nu;
                row.t = tr.times()[k];
                for (std::size_t q = 0; q < np; ++q) row.err_vort.push_back(errs[q][k]);
                row.err_vel_l2 = verr[k];
                row.energy = energy(tr.velocity(k));
                row.enstrophy = enstrophy(tr.frame(k));
                row.flow_dist = row.q_int = row.superlevel = row.y_val = nan();
                if (stoch) {
                    const StabilityReport s = stability_report(*det, *stoch, row.t, out.eps);
                    row.flow_dist = s.flow_distance;
                    if (config.checks.stability) {
                        row.q_int = s.q_integral;
                        row.superlevel = s.superlevel_measure;
                        row.y_val = s.y_value;
                        out.chebyshev = out.chebyshev && s.chebyshev_holds;
                    }
                }
                row.renorm_defect = ren ? ren->defect[k] : nan();
                row.enstrophy_margin = ens ? ens->margin[k] / ens->rhs[k] : nan();
                row.energy_margin =
                    eng ? std::min(eng->upper_margin[k], eng->lower_margin[k]) / std::max(e0, 1e-300) : nan();
                out.rows.push_back(std::move(row));
            }
        });

        LadderSummary& sum = report.summary;
        sum.sup_err_vort.assign(np, std::vector<double>(nn));
        sum.sup_err_vel.resize(nn);
        for (std::size_t e = 0; e < nn; ++e) {
            for (const ReportRow& r : entries[e].rows) {
                for (std::size_t q = 0; q < np; ++q) sum.sup_err_vort[q][e] = std::max(sum.sup_err_vort[q][e], r.err_vort[q]);
                sum.sup_err_vel[e] = std::max(sum.sup_err_vel[e], r.err_vel_l2);
            }
            sum.eps.push_back(entries[e].eps);
            sum.energy_drop.push_back(entries[e].drop);
            report.rows.insert(report.rows.end(), entries[e].rows.begin(), entries[e].rows.end());
        }
        // In free space the smallest nu is its own reference, so it is left out of the fits.
        const std::size_t nfit = torus ? nn : nn - 1;
        const std::vector<double> fit_nus(config.nus.begin(), config.nus.begin() + static_cast<long>(nfit));
        auto head = [nfit](const std::vector<double>& v) { return std::vector<double>(v.begin(), v.begin() + static_cast<long>(nfit)); };
        for (std::size_t q = 0; q < np; ++q) {
            sum.vort_power.push_back(try_fit(fit_nus, head(sum.sup_err_vort[q]), FitMode::Power));
            sum.vort_log.push_back(try_fit(fit_nus, head(sum.sup_err_vort[q]), FitMode::Log));
        }
        sum.vel_power = try_fit(fit_nus, head(sum.sup_err_vel), FitMode::Power);
        sum.vel_log = try_fit(fit_nus, head(sum.sup_err_vel), FitMode::Log);

        sum.checks["sup_error_decreasing"] = strictly_decreasing(head(sum.sup_err_vort.front()));
        if (sum.vort_log.front()) {
            const auto& r = sum.vort_log.front()->envelope_residuals;
            sum.checks["log_envelope_nonnegative"] =
                std::all_of(r.begin(), r.end(), [](double v) { return v >= 0.0; });
        }
        sum.checks["energy_drop_decreasing"] = strictly_decreasing(sum.energy_drop);
        auto all = [&](bool Entry::*field) {
            return std::all_of(entries.begin(), entries.end(), [field](const Entry& e) { return e.*field; });
        };
        if (config.checks.stability) sum.checks["chebyshev"] = all(&Entry::chebyshev);
        if (config.checks.renormalization) sum.checks["renormalization_drift_nonpositive"] = all(&Entry::renorm);
        if (config.checks.enstrophy_bound) sum.checks["enstrophy_bound"] = all(&Entry::enstrophy);
        if (config.checks.energy_sandwich) sum.checks["energy_sandwich"] = all(&Entry::energy);
        report.complete = true;
    } catch (const std::exception& e) {
        report.complete = false;
        report.failure = e.what();
        if (!config.output_dir.empty()) {
            try {
                emit_report(report, config.output_dir);
            } catch (...) {
            }
        }
        throw;
    }
    if (!config.output_dir.empty()) {
        emit_report(report, config.output_dir);
        plot_report(report, config.output_dir);
    }
    return report;
}

}  // namespace ivlab
