#include "ivlab/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

#include "ivlab/error.hpp"

namespace ivlab {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::NonZeroMean: return "NonZeroMean";
        case ErrorCode::GridMismatch: return "GridMismatch";
        case ErrorCode::BadExponent: return "BadExponent";
        case ErrorCode::CflViolation: return "CflViolation";
        case ErrorCode::TimeRangeExceeded: return "TimeRangeExceeded";
        case ErrorCode::BadParams: return "BadParams";
        case ErrorCode::StochasticFlowNotAllowed: return "StochasticFlowNotAllowed";
        case ErrorCode::DeterministicFlowNotAllowed: return "DeterministicFlowNotAllowed";
        case ErrorCode::MismatchedEnsembles: return "MismatchedEnsembles";
        case ErrorCode::BadEps: return "BadEps";
        case ErrorCode::BadAlpha: return "BadAlpha";
        case ErrorCode::InsufficientPoints: return "InsufficientPoints";
        case ErrorCode::NonPositiveError: return "NonPositiveError";
        case ErrorCode::BadBeta: return "BadBeta";
        case ErrorCode::BadRadii: return "BadRadii";
        case ErrorCode::SupportViolation: return "SupportViolation";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::HistoryGap: return "HistoryGap";
        case ErrorCode::BadCutoff: return "BadCutoff";
        case ErrorCode::UnknownDatum: return "UnknownDatum";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::FormatError: return "FormatError";
    }
    return "Unknown";
}

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

void check_size(int n) {
    if (n < 8 || !is_power_of_two(n)) {
        throw Error(ErrorCode::BadParams,
                    "grid size must be a power of two >= 8, got " + std::to_string(n));
    }
}

// One r2c/c2r plan pair per size, created once under a lock and executed with
// the new-array interface. FFTW_ESTIMATE keeps the plan choice independent of
// timing so results are bitwise reproducible.
struct PlanPair {
    fftw_plan r2c = nullptr;
    fftw_plan c2r = nullptr;
};

const PlanPair& plans_for(int n) {
    static std::mutex mutex;
    static std::map<int, PlanPair> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<double> real(static_cast<std::size_t>(n) * n);
    std::vector<Complex> cplx(static_cast<std::size_t>(n) * (n / 2 + 1));
    auto* c = reinterpret_cast<fftw_complex*>(cplx.data());
    PlanPair p;
    p.r2c = fftw_plan_dft_r2c_2d(n, n, real.data(), c, FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.c2r = fftw_plan_dft_c2r_2d(n, n, c, real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    return cache.emplace(n, p).first->second;
}

void require_same_grid(const TorusGrid& a, const TorusGrid& b) {
    if (!(a == b)) throw Error(ErrorCode::GridMismatch, "fields live on different grids");
}

bool nyquist_row(int n, int row) { return row == n / 2; }
bool nyquist_col(int n, int col) { return col == n / 2; }

// Applies multiplier(k1, k2, odd_ok) to every coefficient; kx, ky are angular.
template <class Fn>
SpectralField apply_multiplier(const SpectralField& f, Fn&& multiplier) {
    const TorusGrid& g = f.grid();
    Spectrum s = f.spectrum();
    const int n = g.n;
    for (int row = 0; row < n; ++row) {
        const double k1 = g.angular(g.signed_mode(row));
        for (int col = 0; col < s.cols(); ++col) {
            const double k2 = g.angular(col);
            const bool nyquist = nyquist_row(n, row) || nyquist_col(n, col);
            s(row, col) *= multiplier(k1, k2, nyquist);
        }
    }
    return SpectralField::from_spectrum(g, std::move(s));
}

}  // namespace

TorusGrid TorusGrid::unit(int n) {
    check_size(n);
    return TorusGrid{n, 1.0, 0.0};
}

TorusGrid TorusGrid::box(int n, double length) {
    check_size(n);
    if (!(length > 0.0)) throw Error(ErrorCode::BadParams, "box length must be positive");
    return TorusGrid{n, length, -0.5 * length};
}

double TorusGrid::angular(int k) const { return 2.0 * std::numbers::pi * k / length; }

Spectrum forward_transform(int n, std::span<const double> values) {
    const PlanPair& p = plans_for(n);
    std::vector<double> in(values.begin(), values.end());
    Spectrum out(n);
    fftw_execute_dft_r2c(p.r2c, in.data(), reinterpret_cast<fftw_complex*>(out.data().data()));
    const double scale = 1.0 / (static_cast<double>(n) * n);
    for (auto& c : out.data()) c *= scale;
    return out;
}

std::vector<double> inverse_transform(const Spectrum& spectrum) {
    const int n = spectrum.n();
    const PlanPair& p = plans_for(n);
    std::vector<Complex> in(spectrum.data().begin(), spectrum.data().end());
    std::vector<double> out(static_cast<std::size_t>(n) * n);
    fftw_execute_dft_c2r(p.c2r, reinterpret_cast<fftw_complex*>(in.data()), out.data());
    return out;
}

namespace detail {
struct SpectrumCache {
    std::once_flag once;
    Spectrum spectrum;
};
}  // namespace detail

SpectralField::SpectralField(TorusGrid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)), cache_(std::make_shared<detail::SpectrumCache>()) {
    if (values_.size() != grid_.size()) {
        throw Error(ErrorCode::ShapeMismatch, "value count does not match grid size");
    }
}

SpectralField SpectralField::zeros(const TorusGrid& grid) {
    return SpectralField(grid, std::vector<double>(grid.size(), 0.0));
}

SpectralField SpectralField::constant(const TorusGrid& grid, double value) {
    return SpectralField(grid, std::vector<double>(grid.size(), value));
}

SpectralField SpectralField::from_spectrum(const TorusGrid& grid, Spectrum spectrum) {
    if (spectrum.n() != grid.n) throw Error(ErrorCode::GridMismatch, "spectrum size mismatch");
    SpectralField f(grid, inverse_transform(spectrum));
    std::call_once(f.cache_->once, [&] { f.cache_->spectrum = std::move(spectrum); });
    return f;
}

SpectralField SpectralField::from_function(const TorusGrid& grid,
                                           const std::function<double(double, double)>& fn) {
    std::vector<double> v(grid.size());
    for (int i = 0; i < grid.n; ++i)
        for (int j = 0; j < grid.n; ++j)
            v[static_cast<std::size_t>(i) * grid.n + j] = fn(grid.coord(i), grid.coord(j));
    return SpectralField(grid, std::move(v));
}

const Spectrum& SpectralField::spectrum() const {
    std::call_once(cache_->once, [&] { cache_->spectrum = forward_transform(grid_.n, values_); });
    return cache_->spectrum;
}

Complex SpectralField::coeff(int k1, int k2) const {
    const int n = grid_.n;
    if (std::abs(k1) > n / 2 || std::abs(k2) > n / 2) return {};
    if (k2 < 0) return std::conj(coeff(-k1, -k2));
    const int row = k1 >= 0 ? k1 : k1 + n;
    if (row >= n) return {};
    return spectrum()(row, k2);
}

double SpectralField::mean() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s / static_cast<double>(values_.size());
}

double SpectralField::max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

SpectralField operator+(const SpectralField& a, const SpectralField& b) {
    require_same_grid(a.grid(), b.grid());
    std::vector<double> v(a.values().begin(), a.values().end());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += b.values()[i];
    return SpectralField(a.grid(), std::move(v));
}

SpectralField operator-(const SpectralField& a, const SpectralField& b) {
    require_same_grid(a.grid(), b.grid());
    std::vector<double> v(a.values().begin(), a.values().end());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= b.values()[i];
    return SpectralField(a.grid(), std::move(v));
}

SpectralField operator*(double s, const SpectralField& a) {
    std::vector<double> v(a.values().begin(), a.values().end());
    for (double& x : v) x *= s;
    return SpectralField(a.grid(), std::move(v));
}

SpectralField multiply(const SpectralField& a, const SpectralField& b) {
    require_same_grid(a.grid(), b.grid());
    std::vector<double> v(a.values().begin(), a.values().end());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= b.values()[i];
    return SpectralField(a.grid(), std::move(v));
}

SpectralField map_values(const SpectralField& a, const std::function<double(double)>& f) {
    std::vector<double> v(a.values().begin(), a.values().end());
    for (double& x : v) x = f(x);
    return SpectralField(a.grid(), std::move(v));
}

VelocityField VelocityField::zeros(const TorusGrid& grid) {
    return {SpectralField::zeros(grid), SpectralField::zeros(grid)};
}

double VelocityField::max_speed() const {
    double m = 0.0;
    const auto a = u1.values();
    const auto b = u2.values();
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, a[i] * a[i] + b[i] * b[i]);
    return std::sqrt(m);
}

VelocityField operator-(const VelocityField& a, const VelocityField& b) {
    return {a.u1 - b.u1, a.u2 - b.u2};
}

VelocityField biot_savart(const SpectralField& omega) {
    const double m = omega.mean();
    if (std::abs(m) > kMeanZeroTolerance) {
        throw Error(ErrorCode::NonZeroMean,
                    "Biot-Savart on the torus needs mean-zero vorticity, mean = " + std::to_string(m));
    }
    const TorusGrid& g = omega.grid();
    const Spectrum& w = omega.spectrum();
    Spectrum s1(g.n), s2(g.n);
    for (int row = 0; row < g.n; ++row) {
        const double k1 = g.angular(g.signed_mode(row));
        for (int col = 0; col < w.cols(); ++col) {
            const double k2 = g.angular(col);
            const double k_sq = k1 * k1 + k2 * k2;
            if (k_sq == 0.0 || nyquist_row(g.n, row) || nyquist_col(g.n, col)) continue;
            const Complex psi = w(row, col) / k_sq;
            s1(row, col) = Complex(0.0, k2) * psi;   // d2 psi
            s2(row, col) = Complex(0.0, -k1) * psi;  // -d1 psi
        }
    }
    return {SpectralField::from_spectrum(g, std::move(s1)), SpectralField::from_spectrum(g, std::move(s2))};
}

SpectralField spectral_derivative(const SpectralField& f, Derivative op) {
    switch (op) {
        case Derivative::Grad1:
            return apply_multiplier(f, [](double k1, double, bool nyq) {
                return nyq ? Complex{} : Complex(0.0, k1);
            });
        case Derivative::Grad2:
            return apply_multiplier(f, [](double, double k2, bool nyq) {
                return nyq ? Complex{} : Complex(0.0, k2);
            });
        case Derivative::Laplacian:
            return apply_multiplier(f, [](double k1, double k2, bool) {
                return Complex(-(k1 * k1 + k2 * k2), 0.0);
            });
        case Derivative::InverseNegLaplacian: {
            const double m = f.mean();
            if (std::abs(m) > kMeanZeroTolerance) {
                throw Error(ErrorCode::NonZeroMean, "inverse Laplacian needs mean-zero input");
            }
            return apply_multiplier(f, [](double k1, double k2, bool) {
                const double k_sq = k1 * k1 + k2 * k2;
                return k_sq == 0.0 ? Complex{} : Complex(1.0 / k_sq, 0.0);
            });
        }
    }
    return f;
}

SpectralField curl(const VelocityField& u) {
    require_same_grid(u.u1.grid(), u.u2.grid());
    return spectral_derivative(u.u2, Derivative::Grad1) - spectral_derivative(u.u1, Derivative::Grad2);
}

SpectralField divergence(const VelocityField& u) {
    require_same_grid(u.u1.grid(), u.u2.grid());
    return spectral_derivative(u.u1, Derivative::Grad1) + spectral_derivative(u.u2, Derivative::Grad2);
}

bool is_dealiased_mode(int n, int k1, int k2) {
    return 3 * std::max(std::abs(k1), std::abs(k2)) <= n;
}

SpectralField dealias(const SpectralField& f) {
    const TorusGrid& g = f.grid();
    Spectrum s = f.spectrum();
    for (int row = 0; row < g.n; ++row) {
        const int k1 = g.signed_mode(row);
        for (int col = 0; col < s.cols(); ++col) {
            if (!is_dealiased_mode(g.n, k1, col)) s(row, col) = 0.0;
        }
    }
    return SpectralField::from_spectrum(g, std::move(s));
}

SpectralField resample(const SpectralField& f, int n_new) {
    const TorusGrid& g = f.grid();
    TorusGrid target = g.origin == 0.0 && g.length == 1.0 ? TorusGrid::unit(n_new)
                                                          : TorusGrid::box(n_new, g.length);
    const int keep = std::min(g.n, n_new) / 2;  // modes |k| < keep survive
    const Spectrum& src = f.spectrum();
    Spectrum dst(n_new);
    for (int k1 = -keep + 1; k1 < keep; ++k1) {
        const int rs = k1 >= 0 ? k1 : k1 + g.n;
        const int rd = k1 >= 0 ? k1 : k1 + n_new;
        for (int k2 = 0; k2 < keep; ++k2) dst(rd, k2) = src(rs, k2);
    }
    return SpectralField::from_spectrum(target, std::move(dst));
}

double lp_norm(const SpectralField& f, double p) {
    if (!(p >= 1.0)) throw Error(ErrorCode::BadExponent, "L^p norm needs p >= 1");
    if (std::isinf(p)) return f.max_abs();
    double s = 0.0;
    const auto v = f.values();
    if (p == 1.0) {
        for (double x : v) s += std::abs(x);
    } else if (p == 2.0) {
        for (double x : v) s += x * x;
    } else {
        for (double x : v) s += std::pow(std::abs(x), p);
    }
    s *= f.grid().cell_area();
    return p == 2.0 ? std::sqrt(s) : std::pow(s, 1.0 / p);
}

double lp_norm(const VelocityField& u, double p) {
    require_same_grid(u.u1.grid(), u.u2.grid());
    std::vector<double> mag(u.u1.values().size());
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::hypot(u.u1.values()[i], u.u2.values()[i]);
    return lp_norm(SpectralField(u.grid(), std::move(mag)), p);
}

double parseval_l2_squared(const SpectralField& f) {
    const Spectrum& s = f.spectrum();
    double sum = 0.0;
    for (int row = 0; row < s.n(); ++row)
        for (int col = 0; col < s.cols(); ++col) sum += s.weight(col) * std::norm(s(row, col));
    return sum * f.grid().measure();
}

double sample_at(const SpectralField& f, Point x, Interpolation mode) {
    const TorusGrid& g = f.grid();
    if (mode == Interpolation::Bilinear) {
        return bilinear(f.values(), g.n, (x.x1 - g.origin) / g.spacing(), (x.x2 - g.origin) / g.spacing());
    }
    const Spectrum& s = f.spectrum();
    const double y1 = x.x1 - g.origin;
    const double y2 = x.x2 - g.origin;
    double sum = 0.0;
    for (int row = 0; row < g.n; ++row) {
        const double k1 = g.angular(g.signed_mode(row));
        for (int col = 0; col < s.cols(); ++col) {
            const double phase = k1 * y1 + g.angular(col) * y2;
            const Complex c = s(row, col);
            sum += s.weight(col) * (c.real() * std::cos(phase) - c.imag() * std::sin(phase));
        }
    }
    return sum;
}

std::array<double, 2> sample_at(const VelocityField& u, Point x, Interpolation mode) {
    return {sample_at(u.u1, x, mode), sample_at(u.u2, x, mode)};
}

}  // namespace ivlab
