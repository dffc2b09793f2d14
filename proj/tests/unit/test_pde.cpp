#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "ivlab/error.hpp"
#include "ivlab/pde.hpp"

using namespace ivlab;

namespace {

constexpr double kPi = std::numbers::pi;

SpectralField taylor_green(const TorusGrid& g, double a) {
    return SpectralField::from_function(g, [a](double x, double y) {
        return a * std::sin(2 * kPi * x) * std::sin(2 * kPi * y);
    });
}

SpectralField smooth_random(const TorusGrid& g, unsigned seed, int kmax = 4, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> amp(-1.0, 1.0);
    std::vector<std::array<double, 4>> modes;
    for (int k1 = -kmax; k1 <= kmax; ++k1)
        for (int k2 = 0; k2 <= kmax; ++k2) {
            if (k2 == 0 && k1 <= 0) continue;
            modes.push_back({double(k1), double(k2), amp(rng), amp(rng)});
        }
    return SpectralField::from_function(g, [&](double x, double y) {
        double s = 0.0;
        for (const auto& m : modes) {
            const double ph = 2 * kPi * (m[0] * x + m[1] * y);
            s += scale * (m[2] * std::cos(ph) + m[3] * std::sin(ph));
        }
        return s;
    });
}

double rel_l2(const SpectralField& a, const SpectralField& b) {
    return lp_norm(a - b, 2.0) / lp_norm(b, 2.0);
}

}  // namespace

TEST(StepVorticity, TaylorGreenSingleStep) {
    const auto g = TorusGrid::unit(32);
    const double nu = 0.05, dt = 1e-3;
    const auto w = step_vorticity(taylor_green(g, 2.0), nu, dt);
    const auto exact = taylor_green(g, 2.0 * std::exp(-8 * kPi * kPi * nu * dt));
    EXPECT_LE(rel_l2(w, exact), 1e-12);
}

TEST(StepVorticity, ShearIsSteadyForEuler) {
    const auto g = TorusGrid::unit(32);
    const auto w0 = SpectralField::from_function(g, [](double x, double) { return std::sin(2 * kPi * x); });
    EXPECT_LE(rel_l2(step_vorticity(w0, 0.0, 1e-2), w0), 1e-12);
}

TEST(StepVorticity, ZeroStepIsIdentity) {
    const auto g = TorusGrid::unit(16);
    const auto w0 = smooth_random(g, 1);
    EXPECT_EQ(lp_norm(step_vorticity(w0, 0.1, 0.0) - w0, kInfinity), 0.0);
}

TEST(StepVorticity, Errors) {
    const auto g = TorusGrid::unit(16);
    try {
        step_vorticity(SpectralField::constant(g, 1.0), 0.0, 1e-3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonZeroMean);
    }
    try {
        step_vorticity(smooth_random(g, 2, 3, 50.0), 0.0, 0.5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CflViolation);
    }
}

TEST(SolveNse, TaylorGreenDecay) {
    const auto g = TorusGrid::unit(64);
    const double nu = 1e-2;
    const auto traj = solve_nse(taylor_green(g, 1.0), nu, 0.5, {1e-3, 50, true});
    EXPECT_NEAR(traj.final_time(), 0.5, 1e-15);
    const auto exact = taylor_green(g, std::exp(-8 * kPi * kPi * nu * 0.5));
    EXPECT_LE(rel_l2(traj.frame(traj.size() - 1), exact), 1e-8);
}

TEST(SolveNse, ZeroHorizonKeepsInitialFrame) {
    const auto g = TorusGrid::unit(16);
    const auto w0 = smooth_random(g, 4);
    const auto traj = solve_nse(w0, 0.01, 0.0, {});
    ASSERT_EQ(traj.size(), 1u);
    EXPECT_EQ(lp_norm(traj.frame(0) - w0, kInfinity), 0.0);
}

TEST(SolveNse, EulerConservesEnstrophyAndLpNorms) {
    const auto g = TorusGrid::unit(128);
    const auto w0 = dealias(smooth_random(g, 5, 4, 0.5));
    const auto traj = solve_nse(w0, 0.0, 1.0, {2e-3, 25, true});
    const double z0 = lp_norm(w0, 2.0);
    for (const auto& f : traj.frames()) EXPECT_LE(std::abs(lp_norm(f, 2.0) - z0) / z0, 1e-6);
    // Only L^2 is conserved by the Galerkin truncation; other norms drift by
    // the resolution error, which is small for this smooth datum.
    for (double p : {1.0, 4.0, kInfinity}) {
        const double n0 = lp_norm(w0, p);
        EXPECT_LE(std::abs(lp_norm(traj.frame(traj.size() - 1), p) - n0) / n0, 1e-2) << "p = " << p;
    }
}

TEST(SolveNse, ViscousNormsAndEnergyDecrease) {
    const auto g = TorusGrid::unit(64);
    const auto traj = solve_nse(dealias(smooth_random(g, 6, 4, 0.5)), 5e-3, 0.5, {2e-3, 10, true});
    for (std::size_t i = 1; i < traj.size(); ++i) {
        for (double p : {1.0, 2.0, 4.0, kInfinity}) {
            EXPECT_LE(lp_norm(traj.frame(i), p), lp_norm(traj.frame(i - 1), p) * (1 + 1e-9)) << "p = " << p;
        }
        EXPECT_LE(energy(traj.velocity(i)), energy(traj.velocity(i - 1)));
    }
}

TEST(SolveNse, DiscreteEnergyBalance) {
    const auto g = TorusGrid::unit(64);
    const double nu = 1e-2;
    const auto traj = solve_nse(dealias(smooth_random(g, 7, 4, 0.5)), nu, 0.2, {1e-3, 1, true});
    // Centred difference of the energy against -2 nu * enstrophy.
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 1; i + 1 < traj.size(); ++i) {
        const double dE = (energy(traj.velocity(i + 1)) - energy(traj.velocity(i - 1))) /
                          (traj.times()[i + 1] - traj.times()[i - 1]);
        const double rhs = -2 * nu * enstrophy(traj.frame(i));
        worst = std::max(worst, std::abs(dE - rhs));
        scale = std::max(scale, std::abs(rhs));
    }
    EXPECT_LE(worst, 1e-4 * scale);
}

TEST(SolveNse, FourthOrderInTime) {
    const auto g = TorusGrid::unit(32);
    const auto w0 = dealias(smooth_random(g, 8, 3, 1.0));
    const double T = 0.2;
    auto final_frame = [&](double dt) {
        const auto t = solve_nse(w0, 0.0, T, {dt, 1000000, true});
        return t.frame(t.size() - 1);
    };
    const auto ref = final_frame(0.0025);
    const double e1 = lp_norm(final_frame(0.02) - ref, 2.0);
    const double e2 = lp_norm(final_frame(0.01) - ref, 2.0);
    EXPECT_GT(e1 / e2, 12.0);
    EXPECT_LT(e1 / e2, 20.0);
}

TEST(Energy, TaylorGreenValues) {
    const auto g = TorusGrid::unit(32);
    EXPECT_NEAR(enstrophy(taylor_green(g, 3.0)), 9.0 / 4.0, 1e-13);
    EXPECT_EQ(energy(VelocityField::zeros(g)), 0.0);
    // u = (1/(4 pi)) A (sin x cos y, -cos x sin y) up to sign: |u|^2 mean is A^2/(32 pi^2).
    EXPECT_NEAR(energy(biot_savart(taylor_green(g, 1.0))), 1.0 / (32 * kPi * kPi), 1e-15);
}

TEST(LinearSolver, HeatEigenmode) {
    const auto g = TorusGrid::unit(32);
    const double nu = 0.02, T = 0.3;
    const auto carrier = Trajectory::steady(VelocityField::zeros(g), T, 1e-2);
    const auto rho0 = SpectralField::from_function(g, [](double x, double) { return std::sin(2 * kPi * x); });
    const auto traj = solve_linear_advection_diffusion(rho0, carrier, nu, T, {1e-2, 5, true});
    EXPECT_LE(rel_l2(traj.frame(traj.size() - 1), std::exp(-4 * kPi * kPi * nu * T) * rho0), 1e-12);
}

TEST(LinearSolver, UniformTranslation) {
    const auto g = TorusGrid::unit(64);
    const double T = 0.25;
    const VelocityField b{SpectralField::constant(g, 1.0), SpectralField::zeros(g)};
    const auto carrier = Trajectory::steady(b, T, 2.5e-3);
    auto bump = [](double x, double y) {
        return std::exp(std::cos(2 * kPi * x) + 0.5 * std::sin(2 * kPi * y));
    };
    const auto rho0 = SpectralField::from_function(g, bump);
    const auto traj = solve_linear_advection_diffusion(rho0, carrier, 0.0, T, {2.5e-3, 100, false});
    const auto exact = SpectralField::from_function(g, [&](double x, double y) { return bump(x - T, y); });
    EXPECT_LE(rel_l2(traj.frame(traj.size() - 1), exact), 1e-8);
}

TEST(LinearSolver, ConstantsAreInvariant) {
    const auto g = TorusGrid::unit(32);
    const auto w0 = dealias(smooth_random(g, 9, 3, 0.5));
    const auto carrier = solve_nse(w0, 0.0, 0.2, {5e-3, 1, true});
    const auto traj = solve_linear_advection_diffusion(SpectralField::constant(g, 2.0), carrier, 0.01, 0.2,
                                                       {5e-3, 10, true});
    for (const auto& f : traj.frames()) EXPECT_LE(lp_norm(f - SpectralField::constant(g, 2.0), kInfinity), 1e-12);
}

TEST(LinearSolver, MeanConservedAndRangeChecked) {
    const auto g = TorusGrid::unit(32);
    const auto w0 = dealias(smooth_random(g, 10, 3, 0.5));
    const auto carrier = solve_nse(w0, 0.0, 0.2, {5e-3, 1, true});
    const auto rho0 = map_values(smooth_random(g, 11, 2), [](double v) { return std::exp(v); });
    const auto traj = solve_linear_advection_diffusion(rho0, carrier, 0.0, 0.2, {5e-3, 10, true});
    for (const auto& f : traj.frames()) EXPECT_NEAR(f.mean(), rho0.mean(), 1e-12);
    try {
        solve_linear_advection_diffusion(rho0, carrier, 0.0, 0.3, {5e-3, 10, true});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TimeRangeExceeded);
    }
}

TEST(Trajectory, VelocityInterpolationIsLinearInTime) {
    const auto g = TorusGrid::unit(16);
    const VelocityField a{SpectralField::constant(g, 1.0), SpectralField::zeros(g)};
    const VelocityField b{SpectralField::constant(g, 3.0), SpectralField::constant(g, -1.0)};
    const auto c = Trajectory::from_velocities(0.5, {0.0, 0.5}, {a, b});
    const auto v = c.sample_velocity(0.125, {0.3, 0.7});
    EXPECT_NEAR(v[0], 1.5, 1e-15);
    EXPECT_NEAR(v[1], -0.25, 1e-15);
    EXPECT_THROW(c.sample_velocity(0.6, {0.0, 0.0}), Error);
    EXPECT_THROW(Trajectory::from_velocities(0.5, {0.1, 0.5}, {a, b}), Error);
}

TEST(Trajectory, SaveLoadRoundTrip) {
    const auto g = TorusGrid::unit(16);
    const auto traj = solve_nse(dealias(smooth_random(g, 12, 3, 0.3)), 1e-3, 0.05, {1e-2, 2, true});
    const auto dir = std::filesystem::temp_directory_path() / "ivlab_traj_roundtrip";
    std::filesystem::remove_all(dir);
    save_trajectory(dir, traj);
    const auto back = load_trajectory(dir);
    ASSERT_EQ(back.size(), traj.size());
    EXPECT_EQ(back.times(), traj.times());
    EXPECT_EQ(back.nu(), traj.nu());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        EXPECT_EQ(lp_norm(back.frame(i) - traj.frame(i), kInfinity), 0.0);
        EXPECT_EQ(lp_norm(back.velocity(i).u2 - traj.velocity(i).u2, kInfinity), 0.0);
    }
    std::filesystem::remove_all(dir);
}
