#include "ivlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ivlab/error.hpp"
#include "ivlab/smoothstep.hpp"

namespace ivlab {

namespace {

void require_exponent(double p, double lo, double hi) {
    if (!(p > lo && p < hi)) {
        throw Error(ErrorCode::BadExponent,
                    "exponent " + std::to_string(p) + " outside (" + std::to_string(lo) + ", " + std::to_string(hi) + ")");
    }
}

void require_matching_times(const Trajectory& a, const Trajectory& b) {
    if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "trajectories have different checkpoint counts");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::abs(a.times()[i] - b.times()[i]) > 1e-9 * std::max(1.0, a.final_time())) {
            throw Error(ErrorCode::ShapeMismatch, "trajectories have different checkpoint times");
        }
    }
}

SpectralField on_grid(const SpectralField& f, const TorusGrid& g) {
    return f.grid().n == g.n ? f : resample(f, g.n);
}

}  // namespace

double q_eps(double y_norm, double eps) {
    if (!(eps > 0.0)) throw Error(ErrorCode::BadEps, "eps must be positive");
    return std::log1p(y_norm * y_norm / (eps * eps));
}

double q_eps(Point y, double eps) { return q_eps(std::hypot(y.x1, y.x2), eps); }

StabilityReport stability_report(const FlowEnsemble& det, const FlowEnsemble& stoch, double s, double eps) {
    if (!(eps > 0.0)) throw Error(ErrorCode::BadEps, "eps must be positive");
    if (det.n_seed() != stoch.n_seed() || std::abs(det.t() - stoch.t()) > 1e-12 || det.stochastic()) {
        throw Error(ErrorCode::MismatchedEnsembles, "ensembles must share seeds and release time");
    }
    std::size_t kd, ks;
    try {
        kd = det.s_index(s);
        ks = stoch.s_index(s);
    } catch (const Error&) {
        throw Error(ErrorCode::MismatchedEnsembles, "time s not stored in both ensembles");
    }
    const double level = std::sqrt(eps);
    const int m = stoch.replicas();
    double q_sum = 0.0, d_sum = 0.0, y_sum = 0.0;
    std::size_t above = 0;
    for (std::size_t i = 0; i < det.seed_count(); ++i) {
        const TorusPoint x = det.position(kd, i);
        for (int r = 0; r < m; ++r) {
            const double d = geodesic_distance(x, stoch.position(ks, i, r));
            q_sum += q_eps(d, eps);
            d_sum += d;
            y_sum += d * d;
            if (d > level) ++above;
        }
    }
    const double total = static_cast<double>(det.seed_count()) * m;
    StabilityReport rep;
    rep.eps = eps;
    rep.q_integral = q_sum / total;
    rep.superlevel_measure = static_cast<double>(above) / total;
    rep.chebyshev_rhs = rep.q_integral / std::log1p(1.0 / eps);
    rep.flow_distance = d_sum / total;
    rep.y_value = y_sum / total;
    rep.chebyshev_holds = rep.superlevel_measure * std::log1p(1.0 / eps) <= rep.q_integral * (1.0 + 1e-12);
    return rep;
}

double osgood_modulus(double x) {
    if (!(x > 0.0 && x <= 1.0)) throw Error(ErrorCode::BadAlpha, "modulus defined on (0, 1]");
    return std::log(2.0 - std::log(x)) - std::numbers::ln2;
}

double osgood_inverse(double v) { return std::exp(2.0 - 2.0 * std::exp(v)); }

double osgood_bound(double alpha, double C, double tau) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::BadAlpha, "alpha must lie in (0, 1)");
    if (!(C > 0.0) || tau < 0.0) throw Error(ErrorCode::BadParams, "need C > 0 and tau >= 0");
    if (tau == 0.0) return alpha;
    return osgood_inverse(osgood_modulus(alpha) - C * tau);
}

RateFit fit_rate(const std::vector<double>& nus, const std::vector<double>& errors, FitMode mode) {
    if (nus.size() != errors.size()) throw Error(ErrorCode::ShapeMismatch, "one error per viscosity");
    if (nus.size() < 3) throw Error(ErrorCode::InsufficientPoints, "need at least three ladder points");
    for (std::size_t i = 0; i < nus.size(); ++i) {
        if (!(nus[i] > 0.0)) throw Error(ErrorCode::BadParams, "viscosities must be positive");
        if (i > 0 && !(nus[i] < nus[i - 1])) throw Error(ErrorCode::BadParams, "viscosities must decrease");
        if (errors[i] < 0.0) throw Error(ErrorCode::NonPositiveError, "errors must be nonnegative");
    }
    RateFit fit;
    fit.mode = mode;
    fit.nus = nus;
    fit.errors = errors;
    const auto n = static_cast<double>(nus.size());

    auto least_squares = [&](const std::vector<double>& x, const std::vector<double>& y, double& slope, double& icpt) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            sx += x[i];
            sy += y[i];
            sxx += x[i] * x[i];
            sxy += x[i] * y[i];
        }
        const double mx = sx / n, my = sy / n;
        double cxx = 0, cxy = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            cxx += (x[i] - mx) * (x[i] - mx);
            cxy += (x[i] - mx) * (y[i] - my);
        }
        if (cxx == 0.0) throw Error(ErrorCode::InsufficientPoints, "ladder abscissae coincide");
        slope = cxy / cxx;
        icpt = my - slope * mx;
    };

    if (mode == FitMode::Power) {
        std::vector<double> x(nus.size()), y(nus.size());
        for (std::size_t i = 0; i < nus.size(); ++i) {
            if (!(errors[i] > 0.0)) throw Error(ErrorCode::NonPositiveError, "power fit needs positive errors");
            x[i] = std::log(nus[i]);
            y[i] = std::log(errors[i]);
        }
        double slope, icpt;
        least_squares(x, y, slope, icpt);
        fit.exponent = slope;
        fit.prefactor = std::exp(icpt);
        for (std::size_t i = 0; i < x.size(); ++i) fit.residual = std::max(fit.residual, std::abs(y[i] - icpt - slope * x[i]));
        return fit;
    }

    std::vector<double> x(nus.size());
    for (std::size_t i = 0; i < nus.size(); ++i) {
        if (!(nus[i] < 1.0)) throw Error(ErrorCode::BadParams, "log fit needs nu < 1");
        x[i] = 1.0 / std::abs(std::log(nus[i]));
    }
    double slope, icpt;
    least_squares(x, errors, slope, icpt);
    fit.prefactor = slope;
    fit.delta = icpt;
    for (std::size_t i = 0; i < x.size(); ++i) fit.residual = std::max(fit.residual, std::abs(errors[i] - icpt - slope * x[i]));

    // Upper envelope: a two-variable LP whose optimum sits on a vertex, so
    // enumerate the line through every pair, the flat line and delta = 0.
    const double scale = *std::max_element(errors.begin(), errors.end());
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](double d, double c) {
        if (c < 0.0 || d < 0.0) return;
        double gap = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double g = d + c * x[k] - errors[k];
            if (g < -1e-13 * scale) return;
            gap += g;
        }
        if (gap < best) {
            best = gap;
            fit.envelope_delta = d;
            fit.envelope_c = c;
        }
    };
    consider(scale, 0.0);
    double c0 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) c0 = std::max(c0, errors[k] / x[k]);
    consider(0.0, c0);
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j) {
            const double c = (errors[i] - errors[j]) / (x[i] - x[j]);
            consider(errors[i] - c * x[i], c);
        }
    // Vertices touch data points, so lift delta past any roundoff deficit.
    fit.envelope_residuals.resize(x.size());
    for (int pass = 0; pass < 4; ++pass) {
        double worst = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            fit.envelope_residuals[k] = fit.envelope_delta + fit.envelope_c * x[k] - errors[k];
            worst = std::min(worst, fit.envelope_residuals[k]);
        }
        if (worst >= 0.0) break;
        fit.envelope_delta += -worst + std::numeric_limits<double>::epsilon() * std::abs(fit.envelope_delta);
    }
    return fit;
}

Beta::Beta(Kind kind, std::function<double(double)> f, double eta, bool convex, std::string name)
    : kind_(kind), f_(std::move(f)), eta_(eta), convex_(convex), name_(std::move(name)) {
    if (!(eta_ > 0.0)) throw Error(ErrorCode::BadBeta, "beta must vanish on a neighbourhood of 0");
}

Beta Beta::truncated_power(double eta, double q) {
    if (!(q > 0.0)) throw Error(ErrorCode::BadBeta, "power must be positive");
    return Beta(Kind::TruncatedPower, [eta, q](double s) {
        const double a = std::abs(s);
        return smoothstep((a - eta) / eta) * std::pow(a, q);
    }, eta, false, "truncated-power");
}

Beta Beta::shifted_convex(double eta, double q) {
    if (!(q >= 1.0)) throw Error(ErrorCode::BadBeta, "convexity needs q >= 1");
    return Beta(Kind::ShiftedConvex, [eta, q](double s) {
        const double a = std::abs(s) - eta;
        return a > 0.0 ? std::pow(a, q) : 0.0;
    }, eta, true, "shifted-convex");
}

Beta Beta::bounded_tanh(double eta, double scale) {
    if (!(scale > 0.0)) throw Error(ErrorCode::BadBeta, "scale must be positive");
    return Beta(Kind::BoundedTanh, [eta, scale](double s) {
        return smoothstep((std::abs(s) - eta) / eta) * std::tanh(s / scale);
    }, eta, false, "bounded-tanh");
}

Beta Beta::custom(std::function<double(double)> f, double eta, bool convex, std::string name) {
    if (!(eta > 0.0)) throw Error(ErrorCode::BadBeta, "beta must vanish on a neighbourhood of 0");
    for (int i = -100; i <= 100; ++i) {
        if (f(eta * i / 100.0) != 0.0) throw Error(ErrorCode::BadBeta, "beta does not vanish on [-eta, eta]");
    }
    return Beta(Kind::Custom, std::move(f), eta, convex, std::move(name));
}

RenormalizationResult renormalization_defect(const Trajectory& traj, const Beta& beta, double tolerance) {
    auto integral = [&](const SpectralField& w) {
        double s = 0.0;
        for (double v : w.values()) s += beta(v);
        return s * w.grid().cell_area();
    };
    RenormalizationResult out;
    out.times = traj.times();
    const double i0 = integral(traj.frame(0));
    double prev = i0;
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const double ik = k == 0 ? i0 : integral(traj.frame(k));
        out.defect.push_back(traj.nu() == 0.0 ? std::abs(ik - i0) : ik - i0);
        if (k > 0) out.max_increase = std::max(out.max_increase, ik - prev);
        prev = ik;
    }
    if (traj.nu() > 0.0 && beta.convex()) out.nonincreasing = out.max_increase <= tolerance;
    return out;
}

double tail_mass(const SpectralField& f, double r, double q) {
    if (r < 0.0) throw Error(ErrorCode::BadRadii, "radius must be nonnegative");
    if (!(q > 0.0)) throw Error(ErrorCode::BadExponent, "exponent must be positive");
    const TorusGrid& g = f.grid();
    double s = 0.0;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) {
            if (std::hypot(g.coord(i), g.coord(j)) > r) s += std::pow(std::abs(f(i, j)), q);
        }
    return s * g.cell_area();
}

Cutoff make_cutoff(double r, double R, const TorusGrid& grid) {
    if (!(r > 0.0) || !(2.0 * r < R)) throw Error(ErrorCode::BadRadii, "cutoff needs 0 < 2r < R");
    std::vector<double> v(grid.size());
    double g_max = 0.0, h_max = 0.0;
    for (int i = 0; i < grid.n; ++i)
        for (int j = 0; j < grid.n; ++j) {
            const double rho = std::hypot(grid.coord(i), grid.coord(j));
            const double a = (rho - r) / r;
            const double b = (rho - R) / R;
            const double inner = smoothstep(a), outer = 1.0 - smoothstep(b);
            v[static_cast<std::size_t>(i) * grid.n + j] = inner * outer;
            if (rho == 0.0) continue;
            const double d1 = smoothstep_d1(a) / r * outer - inner * smoothstep_d1(b) / R;
            const double d2 = smoothstep_d2(a) / (r * r) * outer - 2.0 * smoothstep_d1(a) / r * smoothstep_d1(b) / R -
                              inner * smoothstep_d2(b) / (R * R);
            // Radial profile: Hessian eigenvalues are psi'' and psi'/rho.
            g_max = std::max(g_max, std::abs(d1));
            h_max = std::max(h_max, std::hypot(d2, d1 / rho));
        }
    return {SpectralField(grid, std::move(v)), g_max * r, h_max * r * r};
}

BoundCheck enstrophy_bound_check(const Trajectory& traj, double p, double slack) {
    require_exponent(p, 1.0, 2.0);
    if (!(traj.nu() > 0.0)) throw Error(ErrorCode::BadParams, "enstrophy bound needs nu > 0");
    const double e = 2.0 * p / (2.0 - p);
    const double A = std::pow(lp_norm(traj.frame(0), 2.0), -e);
    const double C0 = std::pow(lp_norm(traj.frame(0), p), -e);
    const double B = 2.0 * traj.nu() * p * C0 / (2.0 - p);
    BoundCheck out;
    out.times = traj.times();
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const double rhs = std::pow(A + B * traj.times()[k], -(2.0 - p) / p);
        const double m = rhs - enstrophy(traj.frame(k));
        out.rhs.push_back(rhs);
        out.margin.push_back(m);
        out.worst_relative = std::min(out.worst_relative, m / rhs);
    }
    out.holds = out.worst_relative >= -slack;
    return out;
}

EnergySandwich energy_drop_check(const Trajectory& traj, double p, double slack) {
    require_exponent(p, 1.0, 1.5);
    if (!(traj.nu() > 0.0)) throw Error(ErrorCode::BadParams, "energy sandwich needs nu > 0");
    const double e = 2.0 * p / (2.0 - p);
    const double A = std::pow(lp_norm(traj.frame(0), 2.0), -e);
    const double C0 = std::pow(lp_norm(traj.frame(0), p), -e);
    const double B = 2.0 * traj.nu() * p * C0 / (2.0 - p);
    const double g = 2.0 * (p - 1.0) / p;
    const double factor = (2.0 - p) / (2.0 * C0 * (p - 1.0));
    const double e0 = energy(traj.velocity(0));
    EnergySandwich out;
    out.times = traj.times();
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const double t = traj.times()[k];
        const double drop = energy(traj.velocity(k)) - e0;
        const double lower = -factor * (std::pow(A + B * t, g) - std::pow(A, g));
        out.drop.push_back(drop);
        out.lower_bound.push_back(lower);
        out.upper_margin.push_back(-drop);
        out.lower_margin.push_back(drop - lower);
        if (-drop < -slack * e0 || drop - lower < -slack * e0) out.holds = false;
    }
    return out;
}

double l1l1_velocity_distance(const Trajectory& a, const Trajectory& b) {
    require_matching_times(a, b);
    const TorusGrid& g = a.grid();
    std::vector<double> d(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        const VelocityField vb{on_grid(b.velocity(k).u1, g), on_grid(b.velocity(k).u2, g)};
        d[k] = lp_norm(a.velocity(k) - vb, 1.0);
    }
    double s = 0.0;
    for (std::size_t k = 1; k < d.size(); ++k) s += 0.5 * (d[k] + d[k - 1]) * (a.times()[k] - a.times()[k - 1]);
    return s;
}

double select_eps(double nu, double l1l1_distance) { return std::max(std::sqrt(nu), l1l1_distance); }

std::vector<double> translation_modulus(const SpectralField& omega, const std::vector<int>& shifts) {
    const TorusGrid& g = omega.grid();
    std::vector<double> out;
    for (int h : shifts) {
        double s1 = 0.0, s2 = 0.0;
        for (int i = 0; i < g.n; ++i)
            for (int j = 0; j < g.n; ++j) {
                const int ih = ((i + h) % g.n + g.n) % g.n;
                const int jh = ((j + h) % g.n + g.n) % g.n;
                s1 += std::abs(omega(ih, j) - omega(i, j));
                s2 += std::abs(omega(i, jh) - omega(i, j));
            }
        out.push_back(std::max(s1, s2) * g.cell_area());
    }
    return out;
}

std::vector<double> lp_errors(const Trajectory& a, const Trajectory& b, double p) {
    require_matching_times(a, b);
    std::vector<double> out;
    for (std::size_t k = 0; k < a.size(); ++k) out.push_back(lp_norm(a.frame(k) - on_grid(b.frame(k), a.grid()), p));
    return out;
}

std::vector<double> velocity_l2_errors(const Trajectory& a, const Trajectory& b) {
    require_matching_times(a, b);
    std::vector<double> out;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const VelocityField vb{on_grid(b.velocity(k).u1, a.grid()), on_grid(b.velocity(k).u2, a.grid())};
        out.push_back(lp_norm(a.velocity(k) - vb, 2.0));
    }
    return out;
}

}  // namespace ivlab
