#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <vector>

#include "ivlab/pde.hpp"
#include "ivlab/spectral.hpp"

namespace ivlab {

/// Compactly supported data on the centred box [-L/2, L/2)^2, convolved
/// aperiodically by zero padding to a (2n)^2 lattice.
struct PaddedGrid {
    int n = 0;
    double length = 0.0;

    /// Throws BadParams unless n is a power of two >= 8 and length > 0.
    static PaddedGrid make(int n, double length);
    TorusGrid box() const { return TorusGrid::box(n, length); }
    int padded() const { return 2 * n; }
    double spacing() const { return length / n; }
    /// Data must vanish outside this radius (a quarter of the box).
    double support_radius() const { return length / 4.0; }
};

/// A function of the offset x - y, sampled at every lattice offset
/// (m h, l h) with -n <= m, l < n and stored as its padded transform.
class ConvolutionKernel {
public:
    ConvolutionKernel() = default;
    static ConvolutionKernel from_function(const PaddedGrid& grid, const std::function<double(double, double)>& k);
    /// Kernel whose value at offset z is f(z), with f a box field (zero
    /// outside the box).
    static ConvolutionKernel from_field(const SpectralField& f);
    static ConvolutionKernel from_samples(const PaddedGrid& grid, std::vector<double> samples);

    const PaddedGrid& grid() const { return grid_; }
    /// Row-major (2n)^2 samples, offset m at row m mod 2n.
    const std::vector<double>& samples() const { return samples_; }
    const Spectrum& spectrum() const { return spectrum_; }
    /// (sum over offsets of |k|^q h^2)^{1/q}.
    double lq_norm(double q) const;

    /// (k * f)(x_i) = h^2 sum_j k(x_i - x_j) f(x_j) on the box nodes.
    SpectralField convolve(const SpectralField& f) const;

private:
    PaddedGrid grid_{};
    std::vector<double> samples_;
    Spectrum spectrum_;
};

/// sum_i v_i * w_i. Throws ShapeMismatch on unequal lengths or grids.
SpectralField star_convolution(const std::vector<ConvolutionKernel>& v, const std::vector<SpectralField>& w);
SpectralField star_convolution(const std::vector<SpectralField>& v, const std::vector<SpectralField>& w);
/// sum_ij A_ij * B_ij.
SpectralField star_convolution(const std::array<std::array<ConvolutionKernel, 2>, 2>& a,
                               const std::array<std::array<SpectralField, 2>, 2>& b);

/// Radial C^2 cutoff a = 1 on |x| <= r1, 0 on |x| >= r2.
struct CutoffRadii {
    double r1 = 1.0;
    double r2 = 2.0;
};

/// K = (1/2pi)(-x2, x1)/|x|^2 split by the cutoff a into the near part aK
/// and the smooth far part (1-a)K. Index i is the velocity component.
struct KernelPair {
    PaddedGrid grid;
    CutoffRadii radii;
    std::array<ConvolutionKernel, 2> full;
    std::array<ConvolutionKernel, 2> near;
    std::array<ConvolutionKernel, 2> far;
    /// far_hessian[i][j][k] = d_j (grad^perp (1-a)K_i)_k, grad^perp = (-d2, d1).
    std::array<std::array<std::array<ConvolutionKernel, 2>, 2>, 2> far_hessian;
    std::array<ConvolutionKernel, 2> far_laplacian;
    /// Discrete L^2 norm of far_hessian (all entries) and L^1, L^2 norms of far_laplacian.
    double hessian_l2 = 0.0;
    double laplacian_l1 = 0.0;
    double laplacian_l2 = 0.0;
};

/// Analytic samples; the singular origin cell of K is 0 (its cell average,
/// by oddness). Reads and writes $INVISCID_LAB_CACHE when set. Throws
/// BadCutoff unless 0 < r1 < r2 and length/2 >= 2 r2.
std::shared_ptr<const KernelPair> build_kernels(const PaddedGrid& grid, const CutoffRadii& radii = {});

/// u = K * omega on the box nodes. Throws SupportViolation when |omega|
/// exceeds tolerance * max|omega| outside support_radius().
VelocityField biot_savart_freespace(const SpectralField& omega, const KernelPair& kernels, double tolerance = 1e-8);

/// Velocity operator for solve_vorticity backed by the padded convolution.
VelocityOperator freespace_velocity_operator(std::shared_ptr<const KernelPair> kernels);

/// Vorticity solve in the plane: pseudo-spectral transport on the box with
/// the free-space Biot-Savart law.
Trajectory solve_freespace(const SpectralField& omega0, double nu, double T, const SolverSettings& settings,
                           std::shared_ptr<const KernelPair> kernels, const CheckpointObserver& observer = {},
                           bool store_frames = true);

/// Fourth-order centred curl, valid away from the box edge.
SpectralField finite_difference_curl(const VelocityField& u);

/// Streaming time integrals of u (x) u and nu omega over uniform checkpoints,
/// fed through a CheckpointObserver.
class SerfatiAccumulator {
public:
    explicit SerfatiAccumulator(double nu) : nu_(nu) {}
    /// Throws HistoryGap on a non-increasing time or a spacing that differs
    /// from the first one.
    void add(double t, const SpectralField& omega, const VelocityField& u);
    CheckpointObserver observer();

    double t0() const { return t0_; }
    double t() const { return t_last_; }
    std::size_t count() const { return count_; }
    const SpectralField& omega0() const { return omega0_; }
    const VelocityField& u0() const { return u0_; }
    const SpectralField& omega() const { return omega_last_; }
    const VelocityField& u() const { return u_last_; }
    /// int u_j u_k ds and int nu omega ds by the trapezoid rule.
    const std::array<std::array<SpectralField, 2>, 2>& uu_integral() const { return uu_; }
    const SpectralField& omega_integral() const { return w_int_; }

private:
    double nu_;
    std::size_t count_ = 0;
    double t0_ = 0.0, t_last_ = 0.0, spacing_ = 0.0;
    SpectralField omega0_, omega_last_;
    VelocityField u0_, u_last_;
    std::array<std::array<SpectralField, 2>, 2> uu_;
    SpectralField w_int_;
};

struct SerfatiTerms {
    double t = 0.0;
    VelocityField u0;
    VelocityField near;       // aK * (omega(t) - omega0)
    VelocityField transport;  // -int far_hessian * (u (x) u)
    VelocityField viscous;    // int far_laplacian * nu omega
    VelocityField rhs;        // sum of the four terms
    VelocityField u;          // u(t) from the solver
    /// ||rhs - u||_2 / ||u||_2 on the box.
    double residual = 0.0;
};

/// Right-hand side of the Serfati identity at the accumulator's last time.
/// With a single checkpoint (t = 0) the right side is u0.
SerfatiTerms serfati_rhs(const SerfatiAccumulator& acc, const KernelPair& kernels);

struct ZeroMeanReport {
    double integral = 0.0;
    double l1 = 0.0;
    /// |integral| <= 1e-10 * l1, the condition for finite kinetic energy.
    bool zero_mean = true;
};

ZeroMeanReport zero_mean_check(const SpectralField& omega0);

}  // namespace ivlab
