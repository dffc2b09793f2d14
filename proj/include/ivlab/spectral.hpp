#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

namespace ivlab {

using Complex = std::complex<double>;

/// Uniform n x n periodic grid. The torus T^2 is the unit grid [0,1)^2; the
/// free-space module reuses the same geometry as a centred box [-L/2, L/2)^2.
struct TorusGrid {
    int n = 0;
    double length = 1.0;
    double origin = 0.0;

    /// The flat torus identified with [0,1)^2. Throws BadParams unless n >= 8
    /// and n is a power of two.
    static TorusGrid unit(int n);
    /// Periodic box [-length/2, length/2)^2 used for compactly supported data.
    static TorusGrid box(int n, double length);

    double spacing() const { return length / n; }
    double cell_area() const { return spacing() * spacing(); }
    double measure() const { return length * length; }
    std::size_t size() const { return static_cast<std::size_t>(n) * static_cast<std::size_t>(n); }
    double coord(int i) const { return origin + i * spacing(); }
    /// Signed integer wavenumber of FFT row/column index m in [0, n).
    int signed_mode(int m) const { return m <= n / 2 - 1 ? m : m - n; }
    /// Angular wavenumber 2*pi*k/L.
    double angular(int k) const;

    friend bool operator==(const TorusGrid&, const TorusGrid&) = default;
};

struct Point {
    double x1 = 0.0;
    double x2 = 0.0;
};

/// Half-plane Fourier coefficients of a real field: rows are k1 (FFT order),
/// columns are k2 = 0..n/2. Normalised so that f(x) = sum_k c_k e^{i k.x}.
class Spectrum {
public:
    Spectrum() = default;
    explicit Spectrum(int n) : n_(n), data_(static_cast<std::size_t>(n) * (n / 2 + 1)) {}

    int n() const { return n_; }
    int cols() const { return n_ / 2 + 1; }
    Complex& operator()(int row, int col) { return data_[static_cast<std::size_t>(row) * cols() + col]; }
    const Complex& operator()(int row, int col) const {
        return data_[static_cast<std::size_t>(row) * cols() + col];
    }
    std::span<Complex> data() { return data_; }
    std::span<const Complex> data() const { return data_; }
    /// Multiplicity of column col in the full (Hermitian) spectrum.
    double weight(int col) const { return (col == 0 || col == n_ / 2) ? 1.0 : 2.0; }

private:
    int n_ = 0;
    std::vector<Complex> data_;
};

/// Forward transform (normalised by 1/n^2) of n*n row-major real samples.
Spectrum forward_transform(int n, std::span<const double> values);
/// Inverse transform back to physical samples.
std::vector<double> inverse_transform(const Spectrum& spectrum);

namespace detail {
struct SpectrumCache;
}

/// Real scalar field on a TorusGrid. Physical samples are the primary
/// representation; the Fourier coefficients are computed on first use and
/// shared between copies. Instances are immutable and safe to share.
class SpectralField {
public:
    SpectralField() = default;
    SpectralField(TorusGrid grid, std::vector<double> values);

    static SpectralField zeros(const TorusGrid& grid);
    static SpectralField constant(const TorusGrid& grid, double value);
    static SpectralField from_spectrum(const TorusGrid& grid, Spectrum spectrum);
    /// Samples f(x1, x2) at the grid nodes.
    static SpectralField from_function(const TorusGrid& grid,
                                       const std::function<double(double, double)>& f);

    const TorusGrid& grid() const { return grid_; }
    std::span<const double> values() const { return values_; }
    double operator()(int i1, int i2) const {
        return values_[static_cast<std::size_t>(i1) * grid_.n + i2];
    }
    const Spectrum& spectrum() const;
    /// Coefficient of the signed mode (k1, k2); zero when out of range.
    Complex coeff(int k1, int k2) const;

    double mean() const;
    double max_abs() const;

private:
    TorusGrid grid_{};
    std::vector<double> values_;
    std::shared_ptr<detail::SpectrumCache> cache_;
};

SpectralField operator+(const SpectralField& a, const SpectralField& b);
SpectralField operator-(const SpectralField& a, const SpectralField& b);
SpectralField operator*(double s, const SpectralField& a);
/// Pointwise product.
SpectralField multiply(const SpectralField& a, const SpectralField& b);
SpectralField map_values(const SpectralField& a, const std::function<double(double)>& f);

/// Velocity (or any planar vector) field; both components share a grid.
struct VelocityField {
    SpectralField u1;
    SpectralField u2;

    const TorusGrid& grid() const { return u1.grid(); }
    static VelocityField zeros(const TorusGrid& grid);
    double max_speed() const;
};

VelocityField operator-(const VelocityField& a, const VelocityField& b);

enum class Derivative { Grad1, Grad2, Laplacian, InverseNegLaplacian };

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Tolerance on |mean| below which a field counts as mean-zero.
inline constexpr double kMeanZeroTolerance = 1e-10;

/// u = grad^perp (-Laplacian)^{-1} omega with grad^perp = (d2, -d1), so that
/// curl(biot_savart(omega)) == omega. Throws NonZeroMean.
VelocityField biot_savart(const SpectralField& omega);
/// curl u = d1 u2 - d2 u1. Throws GridMismatch.
SpectralField curl(const VelocityField& u);
SpectralField divergence(const VelocityField& u);
SpectralField spectral_derivative(const SpectralField& f, Derivative op);
/// 2/3-rule truncation: zero every mode with max(|k1|,|k2|) > n/3.
SpectralField dealias(const SpectralField& f);
bool is_dealiased_mode(int n, int k1, int k2);
/// Band-limited resampling onto an n_new grid (zero padding or truncation).
SpectralField resample(const SpectralField& f, int n_new);

/// (integral |f|^p)^{1/p} by uniform-grid quadrature; on the unit torus this
/// is the mean. p = infinity gives max |f|. Throws BadExponent for p < 1.
double lp_norm(const SpectralField& f, double p);
double lp_norm(const VelocityField& u, double p);
/// Sum of |c_k|^2 over the full spectrum, times the domain measure.
double parseval_l2_squared(const SpectralField& f);

enum class Interpolation { Bilinear, Trigonometric };

/// Value at an arbitrary point, wrapped periodically into the grid's cell.
double sample_at(const SpectralField& f, Point x,
                 Interpolation mode = Interpolation::Bilinear);
std::array<double, 2> sample_at(const VelocityField& u, Point x,
                                Interpolation mode = Interpolation::Bilinear);

/// Bilinear lookup on raw row-major samples; the inner loop of particle
/// tracing. x is in grid units relative to the origin.
inline double bilinear(std::span<const double> v, int n, double gx, double gy) {
    const double fx = gx - std::floor(gx);
    const double fy = gy - std::floor(gy);
    const int mask = n - 1;
    const int i0 = static_cast<int>(std::floor(gx)) & mask;
    const int j0 = static_cast<int>(std::floor(gy)) & mask;
    const int i1 = (i0 + 1) & mask;
    const int j1 = (j0 + 1) & mask;
    const auto at = [&](int i, int j) { return v[static_cast<std::size_t>(i) * n + j]; };
    return (1 - fx) * ((1 - fy) * at(i0, j0) + fy * at(i0, j1)) +
           fx * ((1 - fy) * at(i1, j0) + fy * at(i1, j1));
}

}  // namespace ivlab
