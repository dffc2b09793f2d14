#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <vector>

#include "ivlab/spectral.hpp"

namespace ivlab {

struct SolverSettings {
    double dt = 1e-3;
    int checkpoint_every = 1;
    bool dealias = true;
};

/// Maps a physical vorticity to its velocity. Empty means the torus
/// Biot-Savart law; the free-space module substitutes its padded convolution.
using VelocityOperator = std::function<VelocityField(const SpectralField&)>;
/// Called at every checkpoint (including t = 0) with the frame and its velocity.
using CheckpointObserver = std::function<void(double t, const SpectralField& omega, const VelocityField& u)>;

struct SolveHooks {
    VelocityOperator velocity;
    CheckpointObserver observer;
    /// When false only the first and last frames are kept.
    bool store_frames = true;
};

/// Checkpointed solution on [0, T]. Frames and their velocities are immutable.
class Trajectory {
public:
    Trajectory() = default;
    Trajectory(TorusGrid grid, double nu, double dt, std::vector<double> times,
               std::vector<SpectralField> frames, std::vector<VelocityField> velocities);

    /// A carrier made only of prescribed velocities; frames are zero.
    static Trajectory from_velocities(double dt, std::vector<double> times,
                                      std::vector<VelocityField> velocities);
    /// Steady carrier sampled at the checkpoints 0, dt, ..., T.
    static Trajectory steady(const VelocityField& u, double T, double dt);

    const TorusGrid& grid() const { return grid_; }
    double nu() const { return nu_; }
    double dt() const { return dt_; }
    std::size_t size() const { return times_.size(); }
    const std::vector<double>& times() const { return times_; }
    double final_time() const { return times_.back(); }
    const SpectralField& frame(std::size_t i) const { return frames_[i]; }
    const VelocityField& velocity(std::size_t i) const { return velocities_[i]; }
    const std::vector<SpectralField>& frames() const { return frames_; }

    /// Nearest checkpoint index to t; throws TimeRangeExceeded outside [0, T].
    std::size_t index_of(double t) const;
    /// Linear-in-time interpolation between checkpoints.
    VelocityField velocity_at(double t) const;
    /// Bilinear in space, linear in time.
    std::array<double, 2> sample_velocity(double t, Point x) const;

private:
    void locate(double t, std::size_t& i, double& theta) const;

    TorusGrid grid_{};
    double nu_ = 0.0;
    double dt_ = 0.0;
    std::vector<double> times_;
    std::vector<SpectralField> frames_;
    std::vector<VelocityField> velocities_;
};

/// RK4 for -u.grad(omega) with exact integrating-factor diffusion; works on
/// Fourier coefficients so a step costs 20 transforms.
class VorticityStepper {
public:
    VorticityStepper(const TorusGrid& grid, double nu, double dt, bool dealias,
                     VelocityOperator velocity = {});
    /// Advances w in place. Throws CflViolation.
    void step(Spectrum& w) const;
    VelocityField velocity_of(const SpectralField& omega) const;

private:
    Spectrum nonlinear(const Spectrum& w, double* max_speed) const;

    TorusGrid grid_;
    double nu_, dt_;
    bool dealias_;
    VelocityOperator velocity_;
    std::vector<double> k_row_, k_col_;
    Spectrum e_full_, e_half_;
};

/// One step of the vorticity equation; nu = 0 is Euler. Throws CflViolation, NonZeroMean.
SpectralField step_vorticity(const SpectralField& omega, double nu, double dt, bool dealias = true);

/// Vorticity solve with optional velocity substitution and checkpoint observer.
/// The step count is ceil(T/dt) with dt shrunk so the last step lands on T.
Trajectory solve_vorticity(const SpectralField& omega0, double nu, double T, const SolverSettings& settings,
                           const SolveHooks& hooks = {});
Trajectory solve_nse(const SpectralField& omega0, double nu, double T, const SolverSettings& settings);

/// rho_t + div(b rho) = nu Laplacian(rho) with b taken from the carrier.
/// Throws TimeRangeExceeded if T exceeds the carrier horizon.
Trajectory solve_linear_advection_diffusion(const SpectralField& rho0, const Trajectory& carrier, double nu,
                                            double T, const SolverSettings& settings);

/// ||u||_2^2 and ||omega||_2^2.
double energy(const VelocityField& u);
double enstrophy(const SpectralField& omega);

void save_trajectory(const std::filesystem::path& dir, const Trajectory& traj);
Trajectory load_trajectory(const std::filesystem::path& dir);

}  // namespace ivlab
