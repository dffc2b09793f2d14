#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ivlab/error.hpp"
#include "ivlab/metrics.hpp"

using namespace ivlab;

namespace {

constexpr double kPi = std::numbers::pi;

// Fine fixed-step RK4 for y' = C y (2 - ln y).
double osgood_ode(double alpha, double C, double tau, int steps = 20000) {
    double y = alpha;
    const double h = tau / steps;
    auto f = [C](double v) { return C * v * (2.0 - std::log(v)); };
    for (int i = 0; i < steps; ++i) {
        const double k1 = f(y), k2 = f(y + 0.5 * h * k1), k3 = f(y + 0.5 * h * k2), k4 = f(y + h * k3);
        y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return y;
}

SpectralField taylor_green(const TorusGrid& g, double a) {
    return SpectralField::from_function(g, [a](double x, double y) {
        return a * std::sin(2 * kPi * x) * std::sin(2 * kPi * y);
    });
}

SpectralField smooth_datum(const TorusGrid& g) {
    return dealias(SpectralField::from_function(g, [](double x, double y) {
        return std::sin(2 * kPi * x) * std::cos(2 * kPi * y) + 0.6 * std::cos(2 * kPi * (x + 2 * y)) +
               0.3 * std::sin(2 * kPi * (3 * x - y));
    }));
}

}  // namespace

TEST(QEps, Examples) {
    EXPECT_EQ(q_eps(Point{0, 0}, 0.1), 0.0);
    EXPECT_NEAR(q_eps(Point{0.06, 0.08}, 0.1), std::log(2.0), 1e-15);
    EXPECT_LT(q_eps(0.2, 0.1), q_eps(0.3, 0.1));
    EXPECT_THROW(q_eps(0.2, 0.0), Error);
}

TEST(Stability, IdenticalFlowsGiveZero) {
    const auto g = TorusGrid::unit(16);
    const auto carrier = solve_nse(smooth_datum(g), 0.0, 0.2, {0.01, 1, true});
    const auto det = integrate_backward_flow(carrier, 0.2, 8);
    std::vector<std::vector<Point>> lifts{det.lifts(0), det.lifts(1)};
    const FlowEnsemble same(8, 0.2, 1e-3, 1, 0, true, det.s_values(), lifts);
    const auto rep = stability_report(det, same, 0.0, 0.05);
    EXPECT_EQ(rep.q_integral, 0.0);
    EXPECT_EQ(rep.superlevel_measure, 0.0);
    EXPECT_EQ(rep.flow_distance, 0.0);
}

TEST(Stability, ConstantDisplacement) {
    const int n = 8;
    std::vector<Point> base, moved;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            base.push_back({(i + 0.25) / n, (j + 0.5) / n});
            moved.push_back({(i + 0.25) / n + 0.03, (j + 0.5) / n + 0.04});
        }
    const auto det = FlowEnsemble::from_positions(n, 1.0, base);
    std::vector<Point> seeds = det.lifts(0);
    for (double eps : {1e-3, 2e-3, 0.01}) {
        const FlowEnsemble sto(n, 1.0, 1e-3, 1, 0, true, {1.0, 0.0}, {seeds, moved});
        const auto rep = stability_report(det, sto, 0.0, eps);
        EXPECT_NEAR(rep.q_integral, std::log1p(0.05 * 0.05 / (eps * eps)), 1e-12);
        EXPECT_EQ(rep.superlevel_measure, 0.05 > std::sqrt(eps) ? 1.0 : 0.0);
        EXPECT_NEAR(rep.flow_distance, 0.05, 1e-12);
        EXPECT_NEAR(rep.y_value, 0.0025, 1e-14);
    }
}

TEST(Stability, ChebyshevOnRealRun) {
    const auto g = TorusGrid::unit(32);
    const auto w0 = smooth_datum(g);
    const double nu = 2e-3;
    const auto euler = solve_nse(w0, 0.0, 0.3, {0.01, 1, true});
    const auto nse = solve_nse(w0, nu, 0.3, {0.01, 1, true});
    const auto det = integrate_backward_flow(euler, 0.3, 16, {{0.1}});
    const auto sto = integrate_stochastic_flow(nse, 0.3, nu, 16, 50, 77, {{0.1}});
    const double eps = select_eps(nu, l1l1_velocity_distance(nse, euler));
    for (double s : {0.1, 0.0}) {
        const auto rep = stability_report(det, sto, s, eps);
        EXPECT_TRUE(rep.chebyshev_holds);
        EXPECT_LE(rep.superlevel_measure * std::log1p(1.0 / eps), rep.q_integral);
        EXPECT_GE(rep.superlevel_measure, 0.0);
        EXPECT_LE(rep.superlevel_measure, 1.0);
    }
    try {
        stability_report(det, integrate_stochastic_flow(nse, 0.3, nu, 8, 2, 1), 0.0, eps);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MismatchedEnsembles);
    }
}

TEST(Osgood, Examples) {
    EXPECT_EQ(osgood_bound(0.3, 2.0, 0.0), 0.3);
    EXPECT_NEAR(osgood_bound(std::exp(-4.0), 1.0, std::log(2.0)), std::exp(-1.0), 1e-15);
    EXPECT_NEAR(osgood_inverse(osgood_modulus(0.0123)), 0.0123, 1e-15);
    EXPECT_THROW(osgood_bound(1.0, 1.0, 1.0), Error);
    EXPECT_THROW(osgood_bound(0.0, 1.0, 1.0), Error);
}

TEST(Osgood, DominatesOdeSolution) {
    std::mt19937_64 rng(314);
    std::uniform_real_distribution<double> ua(1e-6, 0.9), uc(0.1, 5.0), ut(0.0, 3.0);
    for (int i = 0; i < 25; ++i) {
        const double a = ua(rng), c = uc(rng), tau = ut(rng);
        EXPECT_GE(osgood_bound(a, c, tau) - osgood_ode(a, c, tau), -1e-9) << a << " " << c << " " << tau;
    }
}

TEST(FitRate, PowerLaws) {
    const std::vector<double> nus{1e-2, 3e-3, 1e-3, 3e-4};
    std::vector<double> e1, e2;
    for (double nu : nus) {
        e1.push_back(std::pow(nu, 0.4));
        e2.push_back(3.0 * std::pow(nu, 0.25));
    }
    const auto f1 = fit_rate(nus, e1);
    EXPECT_NEAR(f1.exponent, 0.4, 1e-12);
    EXPECT_LE(f1.residual, 1e-12);
    const auto f2 = fit_rate(nus, e2);
    EXPECT_NEAR(f2.exponent, 0.25, 1e-12);
    EXPECT_NEAR(f2.prefactor, 3.0, 1e-11);
}

TEST(FitRate, LogModeAndEnvelope) {
    const std::vector<double> nus{1e-2, 3e-3, 1e-3, 3e-4};
    std::vector<double> e;
    for (double nu : nus) e.push_back(0.1 + 2.0 / std::abs(std::log(nu)));
    const auto f = fit_rate(nus, e, FitMode::Log);
    EXPECT_NEAR(f.delta, 0.1, 1e-12);
    EXPECT_NEAR(f.prefactor, 2.0, 1e-12);
    EXPECT_LE(f.residual, 1e-12);
    EXPECT_NEAR(f.envelope_delta, 0.1, 1e-12);
    EXPECT_NEAR(f.envelope_c, 2.0, 1e-12);

    const std::vector<double> noisy{0.52, 0.41, 0.37, 0.30};
    const auto g = fit_rate(nus, noisy, FitMode::Log);
    for (double r : g.envelope_residuals) EXPECT_GE(r, -1e-13);
    EXPECT_GE(g.envelope_c, 0.0);
}

TEST(FitRate, EnvelopeDeltaNonnegative) {
    // Errors falling faster than 1/|ln nu| would pull an unconstrained delta below 0.
    const std::vector<double> nus{1e-2, 3e-3, 1e-3, 3e-4};
    const std::vector<double> e{4.5, 3.6, 2.8, 2.0};
    double c = 0.0;
    for (std::size_t k = 0; k < nus.size(); ++k) c = std::max(c, e[k] * std::abs(std::log(nus[k])));
    const auto f = fit_rate(nus, e, FitMode::Log);
    EXPECT_GE(f.envelope_delta, 0.0);
    EXPECT_LE(f.envelope_delta, 1e-12);
    EXPECT_NEAR(f.envelope_c, c, 1e-12 * c);
    for (double r : f.envelope_residuals) EXPECT_GE(r, 0.0);
}

TEST(FitRate, Errors) {
    try {
        fit_rate({1e-2, 1e-3}, {1.0, 0.5});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InsufficientPoints);
    }
    try {
        fit_rate({1e-2, 1e-3, 1e-4}, {1.0, 0.0, 0.5});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonPositiveError);
    }
    EXPECT_THROW(fit_rate({1e-3, 1e-2, 1e-4}, {1.0, 0.5, 0.2}), Error);
}

TEST(Renormalization, SteadyShearHasNoDefect) {
    const auto g = TorusGrid::unit(32);
    const auto w0 = SpectralField::from_function(g, [](double x, double) { return std::sin(2 * kPi * x); });
    const auto traj = solve_nse(w0, 0.0, 0.5, {0.01, 10, true});
    for (const auto& beta : {Beta::truncated_power(0.05, 2.0), Beta::shifted_convex(0.05), Beta::bounded_tanh(0.05, 0.5)}) {
        const auto r = renormalization_defect(traj, beta);
        for (double d : r.defect) EXPECT_LE(d, 1e-12) << beta.name();
    }
}

TEST(Renormalization, ViscousConvexDriftIsNonpositive) {
    const auto g = TorusGrid::unit(64);
    const auto traj = solve_nse(smooth_datum(g), 5e-3, 0.5, {5e-3, 10, true});
    const auto r = renormalization_defect(traj, Beta::shifted_convex(0.01));
    EXPECT_TRUE(r.nonincreasing) << r.max_increase;
    EXPECT_LE(r.defect.back(), 0.0);
}

TEST(Renormalization, BetaMustVanishNearZero) {
    try {
        Beta::custom([](double s) { return s * s; }, 0.1, true, "square");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BadBeta);
    }
    EXPECT_THROW(Beta::shifted_convex(0.0), Error);
    const auto ok = Beta::custom([](double s) { return std::abs(s) > 0.1 ? s * s : 0.0; }, 0.1, false, "cut");
    EXPECT_EQ(ok(0.05), 0.0);
}

TEST(TailMass, CompactSupport) {
    const auto g = TorusGrid::box(64, 4.0);
    const auto f = SpectralField::from_function(g, [](double x, double y) {
        const double r = std::hypot(x, y);
        return r < 0.5 ? 1.0 - r : 0.0;
    });
    EXPECT_EQ(tail_mass(f, 0.5), 0.0);
    EXPECT_GT(tail_mass(f, 0.2), 0.0);
}

TEST(Cutoff, PlateauValuesAndBounds) {
    const auto g = TorusGrid::box(256, 8.0);
    std::vector<double> gb, hb;
    for (double r : {0.2, 0.3, 0.4}) {
        const double R = 1.5;
        const auto c = make_cutoff(r, R, g);
        for (int i = 0; i < g.n; ++i)
            for (int j = 0; j < g.n; ++j) {
                const double rho = std::hypot(g.coord(i), g.coord(j));
                const double v = c.psi(i, j);
                if (rho < r) EXPECT_EQ(v, 0.0);
                if (rho > 2 * r && rho < R) EXPECT_EQ(v, 1.0);
                if (rho > 2 * R) EXPECT_EQ(v, 0.0);
            }
        gb.push_back(c.grad_bound);
        hb.push_back(c.hess_bound);
    }
    for (std::size_t k = 0; k < gb.size(); ++k) {
        EXPECT_LE(gb[k], 1.875 + 1e-12);
        EXPECT_LE(hb[k], 10.0);
    }
    EXPECT_NEAR(gb[0], gb[2], 0.05 * gb[0]);
    EXPECT_THROW(make_cutoff(0.5, 0.9, g), Error);
}

TEST(EnstrophyBound, TaylorGreenRun) {
    const auto g = TorusGrid::unit(32);
    const auto traj = solve_nse(taylor_green(g, 1.0), 1e-2, 0.5, {1e-3, 50, true});
    const auto chk = enstrophy_bound_check(traj, 1.5);
    EXPECT_NEAR(chk.margin.front(), 0.0, 1e-14);
    for (double m : chk.margin) EXPECT_GE(m, 0.0);
    EXPECT_TRUE(chk.holds);
    EXPECT_THROW(enstrophy_bound_check(traj, 2.0), Error);
}

TEST(EnstrophyBound, MarginGrowsWithViscosity) {
    const auto g = TorusGrid::unit(32);
    const auto w0 = smooth_datum(g);
    const auto a = enstrophy_bound_check(solve_nse(w0, 2e-3, 0.3, {5e-3, 20, true}), 1.3);
    const auto b = enstrophy_bound_check(solve_nse(w0, 8e-3, 0.3, {5e-3, 20, true}), 1.3);
    for (std::size_t k = 1; k < a.margin.size(); ++k) EXPECT_GE(b.margin[k], a.margin[k]);
}

TEST(EnergySandwich, TaylorGreenRun) {
    const auto g = TorusGrid::unit(32);
    const auto traj = solve_nse(smooth_datum(g), 1e-2, 0.3, {5e-3, 10, true});
    const auto chk = energy_drop_check(traj, 1.2);
    EXPECT_NEAR(chk.upper_margin.front(), 0.0, 1e-15);
    EXPECT_NEAR(chk.lower_margin.front(), 0.0, 1e-15);
    for (double m : chk.upper_margin) EXPECT_GE(m, 0.0);
    EXPECT_TRUE(chk.holds);
    EXPECT_THROW(energy_drop_check(traj, 1.6), Error);
}

TEST(Distances, L1L1AndEps) {
    const auto g = TorusGrid::unit(16);
    const auto traj = solve_nse(smooth_datum(g), 1e-3, 0.1, {0.01, 2, true});
    EXPECT_EQ(l1l1_velocity_distance(traj, traj), 0.0);
    EXPECT_EQ(select_eps(1e-4, 0.0), 1e-2);
    EXPECT_EQ(select_eps(1e-4, 0.3), 0.3);
    // Steady carriers differing by a constant velocity c: distance = |c| T.
    const VelocityField z = VelocityField::zeros(g);
    const VelocityField c{SpectralField::constant(g, 0.3), SpectralField::constant(g, 0.4)};
    EXPECT_NEAR(l1l1_velocity_distance(Trajectory::steady(z, 0.2, 0.05), Trajectory::steady(c, 0.2, 0.05)), 0.1, 1e-14);
}

TEST(TranslationModulus, SineWave) {
    const auto g = TorusGrid::unit(256);
    const auto f = SpectralField::from_function(g, [](double x, double) { return std::sin(2 * kPi * x); });
    const auto m = translation_modulus(f, {0, 8});
    EXPECT_EQ(m[0], 0.0);
    const double h = 8.0 / 256;
    EXPECT_NEAR(m[1], 2 * std::sin(kPi * h) * 2 / kPi, 1e-4);
}
