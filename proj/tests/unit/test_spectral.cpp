#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ivlab/error.hpp"
#include "ivlab/spectral.hpp"

using namespace ivlab;

namespace {

constexpr double kPi = std::numbers::pi;

double rel_l2(const SpectralField& a, const SpectralField& b) {
    return lp_norm(a - b, 2.0) / lp_norm(b, 2.0);
}

// Sum of a few random Fourier modes, evaluated pointwise (no FFT involved).
SpectralField random_band_limited(const TorusGrid& g, unsigned seed, int kmax, bool zero_mean = true) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> amp(-1.0, 1.0);
    struct Mode { int k1, k2; double a, b; };
    std::vector<Mode> modes;
    for (int k1 = -kmax; k1 <= kmax; ++k1)
        for (int k2 = 0; k2 <= kmax; ++k2) {
            if (k2 == 0 && k1 <= 0 && (zero_mean || k1 < 0)) continue;
            modes.push_back({k1, k2, amp(rng), amp(rng)});
        }
    return SpectralField::from_function(g, [&](double x, double y) {
        double s = 0.0;
        for (const auto& m : modes) {
            const double ph = 2 * kPi * (m.k1 * x + m.k2 * y);
            s += m.a * std::cos(ph) + m.b * std::sin(ph);
        }
        return s;
    });
}

}  // namespace

TEST(TorusGrid, RejectsBadSizes) {
    EXPECT_THROW(TorusGrid::unit(4), Error);
    EXPECT_THROW(TorusGrid::unit(48), Error);
    EXPECT_NO_THROW(TorusGrid::unit(8));
    const auto g = TorusGrid::unit(32);
    EXPECT_DOUBLE_EQ(g.spacing() * g.n, g.length);
}

TEST(Transform, RoundTripIsIdentity) {
    for (int n : {8, 16, 64, 256}) {
        const auto g = TorusGrid::unit(n);
        std::mt19937_64 rng(n);
        std::normal_distribution<double> gauss;
        std::vector<double> v(g.size());
        for (double& x : v) x = gauss(rng);
        const SpectralField f(g, v);
        const auto back = inverse_transform(f.spectrum());
        double err = 0.0, ref = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            err = std::max(err, std::abs(back[i] - v[i]));
            ref = std::max(ref, std::abs(v[i]));
        }
        EXPECT_LE(err / ref, 1e-12) << "n = " << n;
    }
}

TEST(Transform, SingleModeCoefficient) {
    const auto g = TorusGrid::unit(16);
    const auto f = SpectralField::from_function(g, [](double x, double y) {
        return std::cos(2 * kPi * (3 * x - 2 * y));
    });
    EXPECT_NEAR(f.coeff(3, -2).real(), 0.5, 1e-14);
    EXPECT_NEAR(f.coeff(-3, 2).real(), 0.5, 1e-14);
    EXPECT_NEAR(std::abs(f.coeff(3, 2)), 0.0, 1e-14);
}

TEST(BiotSavart, ZeroFieldGivesZeroVelocity) {
    const auto g = TorusGrid::unit(16);
    const auto u = biot_savart(SpectralField::zeros(g));
    EXPECT_EQ(u.max_speed(), 0.0);
}

TEST(BiotSavart, SineShear) {
    const auto g = TorusGrid::unit(32);
    const auto w = SpectralField::from_function(g, [](double x, double) { return std::sin(2 * kPi * x); });
    const auto u = biot_savart(w);
    const auto expected_u2 =
        SpectralField::from_function(g, [](double x, double) { return -std::cos(2 * kPi * x) / (2 * kPi); });
    EXPECT_LE(lp_norm(u.u1, kInfinity), 1e-14);
    EXPECT_LE(lp_norm(u.u2 - expected_u2, kInfinity), 1e-14);
    EXPECT_LE(rel_l2(curl(u), w), 1e-12);
}

TEST(BiotSavart, ConstantRaisesNonZeroMean) {
    const auto g = TorusGrid::unit(16);
    try {
        biot_savart(SpectralField::constant(g, 1.0));
        FAIL() << "expected NonZeroMean";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonZeroMean);
    }
}

TEST(BiotSavart, CurlRoundTripAndDivergence) {
    for (int n : {16, 64, 128}) {
        const auto g = TorusGrid::unit(n);
        const auto w = random_band_limited(g, 7 + n, n / 4);
        const auto u = biot_savart(w);
        EXPECT_LE(rel_l2(curl(u), w), 1e-10);
        EXPECT_LE(lp_norm(divergence(u), 2.0), 1e-10 * lp_norm(u, 2.0));
    }
}

TEST(Curl, InvertsShearExample) {
    const auto g = TorusGrid::unit(32);
    VelocityField u{SpectralField::zeros(g),
                    SpectralField::from_function(g, [](double x, double) { return -std::cos(2 * kPi * x) / (2 * kPi); })};
    const auto w = curl(u);
    const auto expected = SpectralField::from_function(g, [](double x, double) { return std::sin(2 * kPi * x); });
    EXPECT_LE(lp_norm(w - expected, kInfinity), 1e-13);
    EXPECT_EQ(curl(VelocityField::zeros(g)).max_abs(), 0.0);
}

TEST(Curl, GridMismatch) {
    VelocityField u{SpectralField::zeros(TorusGrid::unit(16)), SpectralField::zeros(TorusGrid::unit(32))};
    try {
        curl(u);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::GridMismatch);
    }
}

TEST(Derivative, LaplacianEigenfunction) {
    const auto g = TorusGrid::unit(32);
    const auto f = SpectralField::from_function(g, [](double x, double) { return std::sin(2 * kPi * x); });
    const auto lap = spectral_derivative(f, Derivative::Laplacian);
    EXPECT_LE(lp_norm(lap - (-4 * kPi * kPi) * f, kInfinity), 1e-11);
}

TEST(Derivative, InverseLaplacianUndoesLaplacian) {
    const auto g = TorusGrid::unit(64);
    const auto f = random_band_limited(g, 3, 10);
    const auto back = spectral_derivative(spectral_derivative(f, Derivative::Laplacian),
                                          Derivative::InverseNegLaplacian);
    EXPECT_LE(rel_l2(back, (-1.0) * f), 1e-12);
    EXPECT_THROW(spectral_derivative(SpectralField::constant(g, 2.0), Derivative::InverseNegLaplacian), Error);
}

TEST(Derivative, GradientOfConstantIsZero) {
    const auto g = TorusGrid::unit(16);
    const auto c = SpectralField::constant(g, 3.5);
    EXPECT_LE(spectral_derivative(c, Derivative::Grad1).max_abs(), 1e-14);
    EXPECT_LE(spectral_derivative(c, Derivative::Grad2).max_abs(), 1e-14);
}

TEST(Derivative, Grad2OfMixedMode) {
    const auto g = TorusGrid::unit(32);
    const auto f = SpectralField::from_function(g, [](double x, double y) { return std::sin(2 * kPi * x) * std::cos(4 * kPi * y); });
    const auto d2 = spectral_derivative(f, Derivative::Grad2);
    const auto expected = SpectralField::from_function(g, [](double x, double y) {
        return -4 * kPi * std::sin(2 * kPi * x) * std::sin(4 * kPi * y);
    });
    EXPECT_LE(lp_norm(d2 - expected, kInfinity), 1e-12);
}

TEST(Dealias, LowModesUnchanged) {
    const auto g = TorusGrid::unit(32);
    const auto f = random_band_limited(g, 11, 10);
    EXPECT_LE(lp_norm(dealias(f) - f, kInfinity), 1e-13);
}

TEST(Dealias, NyquistModeRemoved) {
    const auto g = TorusGrid::unit(16);
    const auto f = SpectralField::from_function(g, [](double x, double) { return std::cos(2 * kPi * 8 * x); });
    EXPECT_GT(f.max_abs(), 0.5);
    EXPECT_LE(dealias(f).max_abs(), 1e-14);
}

TEST(Dealias, IdempotentAndContractive) {
    const auto g = TorusGrid::unit(32);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss;
    std::vector<double> v(g.size());
    for (double& x : v) x = gauss(rng);
    const SpectralField f(g, v);
    const auto d = dealias(f);
    EXPECT_LE(lp_norm(dealias(d) - d, kInfinity), 1e-14);
    EXPECT_LE(lp_norm(d, 2.0), lp_norm(f, 2.0));
    EXPECT_TRUE(is_dealiased_mode(32, 10, -10));
    EXPECT_FALSE(is_dealiased_mode(32, 11, 0));
}

TEST(Norms, ConstantsAndIndicators) {
    const auto g = TorusGrid::unit(32);
    const auto c = SpectralField::constant(g, -2.5);
    for (double p : {1.0, 1.3, 2.0, 4.0, kInfinity}) EXPECT_NEAR(lp_norm(c, p), 2.5, 1e-13);
    const auto half = SpectralField::from_function(g, [](double x, double) { return x < 0.5 ? 1.0 : 0.0; });
    EXPECT_NEAR(lp_norm(half, 2.0), std::sqrt(0.5), 1e-14);
    const auto s = SpectralField::from_function(g, [](double x, double) { return std::sin(2 * kPi * x); });
    EXPECT_NEAR(lp_norm(s, 2.0), std::sqrt(0.5), 1e-14);
    EXPECT_THROW(lp_norm(c, 0.5), Error);
}

TEST(Norms, Parseval) {
    const auto g = TorusGrid::unit(64);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> gauss;
    std::vector<double> v(g.size());
    for (double& x : v) x = gauss(rng);
    const SpectralField f(g, v);
    const double direct = std::pow(lp_norm(f, 2.0), 2);
    EXPECT_LE(std::abs(parseval_l2_squared(f) - direct) / direct, 1e-10);
}

TEST(Sample, ConstantAndNodes) {
    const auto g = TorusGrid::unit(16);
    const auto c = SpectralField::constant(g, 4.0);
    EXPECT_NEAR(sample_at(c, {0.123, 0.987}), 4.0, 1e-15);
    EXPECT_NEAR(sample_at(c, {-3.3, 7.1}), 4.0, 1e-15);
    const auto f = random_band_limited(g, 2, 4);
    EXPECT_DOUBLE_EQ(sample_at(f, {g.coord(3), g.coord(11)}), f(3, 11));
    EXPECT_NEAR(sample_at(f, {g.coord(3), g.coord(11)}, Interpolation::Trigonometric), f(3, 11), 1e-12);
}

TEST(Sample, BilinearReproducesCellwiseBilinear) {
    const auto g = TorusGrid::unit(8);
    std::vector<double> v(g.size());
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) v[i * 8 + j] = 0.3 * i - 0.7 * j + 0.11 * i * j;
    const SpectralField f(g, v);
    // Inside the cell [2h,3h]x[4h,5h] the interpolant equals the bilinear law.
    const double h = g.spacing();
    const double gx = 2.25, gy = 4.6;
    const double expected = 0.3 * gx - 0.7 * gy + 0.11 * gx * gy;
    EXPECT_NEAR(sample_at(f, {gx * h, gy * h}), expected, 1e-13);
}

TEST(Sample, TrigonometricIsExactForBandLimited) {
    const auto g = TorusGrid::unit(16);
    const auto f = SpectralField::from_function(g, [](double x, double y) { return std::sin(2 * kPi * x) * std::cos(2 * kPi * 3 * y); });
    const Point p{0.3141, 0.2718};
    EXPECT_NEAR(sample_at(f, p, Interpolation::Trigonometric),
                std::sin(2 * kPi * p.x1) * std::cos(2 * kPi * 3 * p.x2), 1e-13);
}

TEST(Resample, PreservesBandLimitedField) {
    const auto f = random_band_limited(TorusGrid::unit(32), 4, 6);
    const auto up = resample(f, 64);
    const auto direct = random_band_limited(TorusGrid::unit(64), 4, 6);
    EXPECT_LE(rel_l2(up, direct), 1e-12);
    EXPECT_LE(rel_l2(resample(up, 32), f), 1e-12);
}
