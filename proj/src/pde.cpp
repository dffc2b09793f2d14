#include "ivlab/pde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "ivlab/error.hpp"
#include "ivlab/io.hpp"

namespace ivlab {

Trajectory::Trajectory(TorusGrid grid, double nu, double dt, std::vector<double> times,
                       std::vector<SpectralField> frames, std::vector<VelocityField> velocities)
    : grid_(grid), nu_(nu), dt_(dt), times_(std::move(times)), frames_(std::move(frames)),
      velocities_(std::move(velocities)) {
    if (times_.empty() || times_.front() != 0.0) {
        throw Error(ErrorCode::BadParams, "trajectory times must start at 0");
    }
    for (std::size_t i = 1; i < times_.size(); ++i) {
        if (!(times_[i] > times_[i - 1])) throw Error(ErrorCode::BadParams, "times must increase");
    }
    if (frames_.size() != times_.size() || velocities_.size() != times_.size()) {
        throw Error(ErrorCode::ShapeMismatch, "one frame and one velocity per checkpoint");
    }
}

Trajectory Trajectory::from_velocities(double dt, std::vector<double> times, std::vector<VelocityField> velocities) {
    if (velocities.empty()) throw Error(ErrorCode::BadParams, "empty carrier");
    const TorusGrid g = velocities.front().grid();
    std::vector<SpectralField> frames(velocities.size(), SpectralField::zeros(g));
    return Trajectory(g, 0.0, dt, std::move(times), std::move(frames), std::move(velocities));
}

Trajectory Trajectory::steady(const VelocityField& u, double T, double dt) {
    const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
    std::vector<double> times{0.0};
    for (std::size_t i = 1; i <= steps; ++i) times.push_back(T * static_cast<double>(i) / static_cast<double>(steps));
    const std::size_t count = times.size();
    return from_velocities(steps == 0 ? dt : T / static_cast<double>(steps), std::move(times),
                           std::vector<VelocityField>(count, u));
}

void Trajectory::locate(double t, std::size_t& i, double& theta) const {
    const double slack = 1e-9 * std::max(1.0, final_time());
    if (t < -slack || t > final_time() + slack) {
        throw Error(ErrorCode::TimeRangeExceeded, "time " + std::to_string(t) + " outside carrier range");
    }
    if (times_.size() == 1) {
        i = 0;
        theta = 0.0;
        return;
    }
    t = std::clamp(t, 0.0, final_time());
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    std::size_t hi = static_cast<std::size_t>(it - times_.begin());
    hi = std::clamp<std::size_t>(hi, 1, times_.size() - 1);
    i = hi - 1;
    theta = (t - times_[i]) / (times_[hi] - times_[i]);
}

std::size_t Trajectory::index_of(double t) const {
    std::size_t i;
    double theta;
    locate(t, i, theta);
    return (theta > 0.5 && i + 1 < times_.size()) ? i + 1 : i;
}

VelocityField Trajectory::velocity_at(double t) const {
    std::size_t i;
    double theta;
    locate(t, i, theta);
    if (theta == 0.0) return velocities_[i];
    if (theta == 1.0) return velocities_[i + 1];
    const auto& a = velocities_[i];
    const auto& b = velocities_[i + 1];
    return {(1.0 - theta) * a.u1 + theta * b.u1, (1.0 - theta) * a.u2 + theta * b.u2};
}

std::array<double, 2> Trajectory::sample_velocity(double t, Point x) const {
    std::size_t i;
    double theta;
    locate(t, i, theta);
    const double gx = (x.x1 - grid_.origin) / grid_.spacing();
    const double gy = (x.x2 - grid_.origin) / grid_.spacing();
    const int n = grid_.n;
    const auto& a = velocities_[i];
    std::array<double, 2> v{bilinear(a.u1.values(), n, gx, gy), bilinear(a.u2.values(), n, gx, gy)};
    if (theta > 0.0) {
        const auto& b = velocities_[i + 1];
        v[0] += theta * (bilinear(b.u1.values(), n, gx, gy) - v[0]);
        v[1] += theta * (bilinear(b.u2.values(), n, gx, gy) - v[1]);
    }
    return v;
}

VorticityStepper::VorticityStepper(const TorusGrid& grid, double nu, double dt, bool dealias,
                                   VelocityOperator velocity)
    : grid_(grid), nu_(nu), dt_(dt), dealias_(dealias), velocity_(std::move(velocity)),
      e_full_(grid.n), e_half_(grid.n) {
    if (nu < 0.0 || dt < 0.0) throw Error(ErrorCode::BadParams, "nu and dt must be nonnegative");
    const int n = grid.n;
    k_row_.resize(n);
    k_col_.resize(n / 2 + 1);
    for (int r = 0; r < n; ++r) k_row_[r] = grid.angular(grid.signed_mode(r));
    for (int c = 0; c <= n / 2; ++c) k_col_[c] = grid.angular(c);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c <= n / 2; ++c) {
            const double k_sq = k_row_[r] * k_row_[r] + k_col_[c] * k_col_[c];
            e_full_(r, c) = std::exp(-nu * k_sq * dt);
            e_half_(r, c) = std::exp(-0.5 * nu * k_sq * dt);
        }
}

VelocityField VorticityStepper::velocity_of(const SpectralField& omega) const {
    return velocity_ ? velocity_(omega) : biot_savart(omega);
}

Spectrum VorticityStepper::nonlinear(const Spectrum& w, double* max_speed) const {
    const int n = grid_.n;
    const int cols = n / 2 + 1;
    Spectrum wx(n), wy(n), s1(n), s2(n);
    for (int r = 0; r < n; ++r) {
        const double k1 = k_row_[r];
        for (int c = 0; c < cols; ++c) {
            if (r == n / 2 || c == n / 2) continue;
            const double k2 = k_col_[c];
            const Complex z = w(r, c);
            wx(r, c) = Complex(-k1 * z.imag(), k1 * z.real());
            wy(r, c) = Complex(-k2 * z.imag(), k2 * z.real());
            if (!velocity_) {
                const double k_sq = k1 * k1 + k2 * k2;
                if (k_sq > 0.0) {
                    s1(r, c) = wy(r, c) / k_sq;
                    s2(r, c) = -wx(r, c) / k_sq;
                }
            }
        }
    }
    const std::vector<double> gx = inverse_transform(wx);
    const std::vector<double> gy = inverse_transform(wy);
    std::vector<double> u1, u2;
    if (velocity_) {
        const VelocityField u = velocity_(SpectralField::from_spectrum(grid_, w));
        u1.assign(u.u1.values().begin(), u.u1.values().end());
        u2.assign(u.u2.values().begin(), u.u2.values().end());
    } else {
        u1 = inverse_transform(s1);
        u2 = inverse_transform(s2);
    }
    double speed_sq = 0.0;
    std::vector<double> prod(gx.size());
    for (std::size_t i = 0; i < prod.size(); ++i) {
        prod[i] = u1[i] * gx[i] + u2[i] * gy[i];
        speed_sq = std::max(speed_sq, u1[i] * u1[i] + u2[i] * u2[i]);
    }
    if (max_speed) *max_speed = std::sqrt(speed_sq);
    Spectrum out = forward_transform(n, prod);
    if (dealias_) {
        for (int r = 0; r < n; ++r) {
            const int k1 = grid_.signed_mode(r);
            for (int c = 0; c < cols; ++c)
                if (!is_dealiased_mode(n, k1, c)) out(r, c) = 0.0;
        }
    }
    out(0, 0) = 0.0;
    return out;
}

void VorticityStepper::step(Spectrum& w) const {
    if (dt_ == 0.0) return;
    const std::size_t m = w.data().size();
    const auto E = e_full_.data();
    const auto Eh = e_half_.data();
    const double h = dt_;

    double speed = 0.0;
    const Spectrum n1 = nonlinear(w, &speed);
    if (speed * h > 0.5 * grid_.spacing()) {
        throw Error(ErrorCode::CflViolation, "dt = " + std::to_string(h) + " exceeds 0.5*h/max|u| with max|u| = " +
                                                 std::to_string(speed));
    }
    const auto w0 = w.data();
    Spectrum stage(grid_.n);
    auto st = stage.data();
    const auto k1 = n1.data();
    for (std::size_t i = 0; i < m; ++i) st[i] = Eh[i] * (w0[i] - 0.5 * h * k1[i]);
    const Spectrum n2 = nonlinear(stage, nullptr);
    const auto k2 = n2.data();
    for (std::size_t i = 0; i < m; ++i) st[i] = Eh[i] * w0[i] - 0.5 * h * k2[i];
    const Spectrum n3 = nonlinear(stage, nullptr);
    const auto k3 = n3.data();
    for (std::size_t i = 0; i < m; ++i) st[i] = E[i] * w0[i] - h * Eh[i] * k3[i];
    const Spectrum n4 = nonlinear(stage, nullptr);
    const auto k4 = n4.data();
    // The nonlinear term enters with a minus sign: omega_t = -u.grad(omega) + nu Lap(omega).
    for (std::size_t i = 0; i < m; ++i) {
        w0[i] = E[i] * w0[i] - h / 6.0 * (E[i] * k1[i] + 2.0 * Eh[i] * (k2[i] + k3[i]) + k4[i]);
    }
}

SpectralField step_vorticity(const SpectralField& omega, double nu, double dt, bool dealias) {
    if (std::abs(omega.mean()) > kMeanZeroTolerance) {
        throw Error(ErrorCode::NonZeroMean, "vorticity must be mean-zero");
    }
    if (dt == 0.0) return omega;
    VorticityStepper stepper(omega.grid(), nu, dt, dealias);
    Spectrum w = omega.spectrum();
    stepper.step(w);
    return SpectralField::from_spectrum(omega.grid(), std::move(w));
}

namespace {

std::size_t step_count(double T, double dt) {
    if (!(dt > 0.0)) throw Error(ErrorCode::BadParams, "dt must be positive");
    if (T < 0.0) throw Error(ErrorCode::BadParams, "T must be nonnegative");
    return static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
}

}  // namespace

Trajectory solve_vorticity(const SpectralField& omega0, double nu, double T, const SolverSettings& settings,
                           const SolveHooks& hooks) {
    if (!hooks.velocity && std::abs(omega0.mean()) > kMeanZeroTolerance) {
        throw Error(ErrorCode::NonZeroMean, "initial vorticity must be mean-zero");
    }
    if (settings.checkpoint_every < 1) throw Error(ErrorCode::BadParams, "checkpoint_every must be >= 1");
    const std::size_t steps = step_count(T, settings.dt);
    const double dt = steps == 0 ? settings.dt : T / static_cast<double>(steps);
    const TorusGrid& g = omega0.grid();
    VorticityStepper stepper(g, nu, dt, settings.dealias, hooks.velocity);

    std::vector<double> times;
    std::vector<SpectralField> frames;
    std::vector<VelocityField> velocities;
    auto record = [&](double t, const SpectralField& w) {
        VelocityField u = stepper.velocity_of(w);
        if (hooks.observer) hooks.observer(t, w, u);
        if (!hooks.store_frames && frames.size() >= 2) {
            times.back() = t;
            frames.back() = w;
            velocities.back() = std::move(u);
            return;
        }
        times.push_back(t);
        frames.push_back(w);
        velocities.push_back(std::move(u));
    };

    record(0.0, omega0);
    Spectrum w = omega0.spectrum();
    for (std::size_t s = 1; s <= steps; ++s) {
        stepper.step(w);
        if (s % static_cast<std::size_t>(settings.checkpoint_every) == 0 || s == steps) {
            record(s == steps ? T : dt * static_cast<double>(s), SpectralField::from_spectrum(g, w));
        }
    }
    return Trajectory(g, nu, dt, std::move(times), std::move(frames), std::move(velocities));
}

Trajectory solve_nse(const SpectralField& omega0, double nu, double T, const SolverSettings& settings) {
    if (nu < 0.0) throw Error(ErrorCode::BadParams, "nu must be nonnegative");
    return solve_vorticity(omega0, nu, T, settings);
}

Trajectory solve_linear_advection_diffusion(const SpectralField& rho0, const Trajectory& carrier, double nu,
                                            double T, const SolverSettings& settings) {
    if (nu < 0.0) throw Error(ErrorCode::BadParams, "nu must be nonnegative");
    if (T > carrier.final_time() * (1.0 + 1e-12) + 1e-12) {
        throw Error(ErrorCode::TimeRangeExceeded, "carrier does not cover [0, T]");
    }
    if (!(rho0.grid() == carrier.grid())) throw Error(ErrorCode::GridMismatch, "carrier grid differs");
    const std::size_t steps = step_count(T, settings.dt);
    const double dt = steps == 0 ? settings.dt : T / static_cast<double>(steps);
    const TorusGrid& g = rho0.grid();
    const int n = g.n;

    Spectrum e_full(n), e_half(n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c <= n / 2; ++c) {
            const double k1 = g.angular(g.signed_mode(r));
            const double k2 = g.angular(c);
            e_full(r, c) = std::exp(-nu * (k1 * k1 + k2 * k2) * dt);
            e_half(r, c) = std::exp(-0.5 * nu * (k1 * k1 + k2 * k2) * dt);
        }

    // Conservative form keeps the mean exact.
    auto flux_div = [&](const Spectrum& rho, double t) {
        const VelocityField b = carrier.velocity_at(t);
        const std::vector<double> r = inverse_transform(rho);
        std::vector<double> f1(r.size()), f2(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) {
            f1[i] = b.u1.values()[i] * r[i];
            f2[i] = b.u2.values()[i] * r[i];
        }
        SpectralField flux1(g, std::move(f1)), flux2(g, std::move(f2));
        SpectralField div = spectral_derivative(flux1, Derivative::Grad1) + spectral_derivative(flux2, Derivative::Grad2);
        if (settings.dealias) div = dealias(div);
        Spectrum out = div.spectrum();
        out(0, 0) = 0.0;
        return out;
    };

    std::vector<double> times{0.0};
    std::vector<SpectralField> frames{rho0};
    Spectrum rho = rho0.spectrum();
    const std::size_t m = rho.data().size();
    const auto E = e_full.data();
    const auto Eh = e_half.data();
    for (std::size_t s = 1; s <= steps; ++s) {
        const double t0 = dt * static_cast<double>(s - 1);
        auto w0 = rho.data();
        Spectrum stage(n);
        auto st = stage.data();
        const Spectrum a1 = flux_div(rho, t0);
        for (std::size_t i = 0; i < m; ++i) st[i] = Eh[i] * (w0[i] - 0.5 * dt * a1.data()[i]);
        const Spectrum a2 = flux_div(stage, t0 + 0.5 * dt);
        for (std::size_t i = 0; i < m; ++i) st[i] = Eh[i] * w0[i] - 0.5 * dt * a2.data()[i];
        const Spectrum a3 = flux_div(stage, t0 + 0.5 * dt);
        for (std::size_t i = 0; i < m; ++i) st[i] = E[i] * w0[i] - dt * Eh[i] * a3.data()[i];
        const Spectrum a4 = flux_div(stage, std::min(t0 + dt, carrier.final_time()));
        for (std::size_t i = 0; i < m; ++i) {
            w0[i] = E[i] * w0[i] - dt / 6.0 *
                                       (E[i] * a1.data()[i] + 2.0 * Eh[i] * (a2.data()[i] + a3.data()[i]) +
                                        a4.data()[i]);
        }
        if (s % static_cast<std::size_t>(settings.checkpoint_every) == 0 || s == steps) {
            times.push_back(s == steps ? T : dt * static_cast<double>(s));
            frames.push_back(SpectralField::from_spectrum(g, rho));
        }
    }
    std::vector<VelocityField> velocities;
    velocities.reserve(times.size());
    for (double t : times) velocities.push_back(carrier.velocity_at(t));
    return Trajectory(g, nu, dt, std::move(times), std::move(frames), std::move(velocities));
}

double energy(const VelocityField& u) {
    const double a = lp_norm(u, 2.0);
    return a * a;
}

double enstrophy(const SpectralField& omega) {
    const double a = lp_norm(omega, 2.0);
    return a * a;
}

void save_trajectory(const std::filesystem::path& dir, const Trajectory& traj) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["nu"] = traj.nu();
    manifest["dt"] = traj.dt();
    manifest["N"] = traj.grid().n;
    manifest["length"] = traj.grid().length;
    manifest["times"] = traj.times();
    for (std::size_t i = 0; i < traj.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu", i);
        write_field(dir / (std::string("omega_") + name + ".ivlb"), traj.frame(i));
        write_field(dir / (std::string("u1_") + name + ".ivlb"), traj.velocity(i).u1, PayloadKind::VelocityComponent);
        write_field(dir / (std::string("u2_") + name + ".ivlb"), traj.velocity(i).u2, PayloadKind::VelocityComponent);
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw Error(ErrorCode::IoError, "cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

Trajectory load_trajectory(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw Error(ErrorCode::IoError, "missing manifest in " + dir.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, e.what());
    }
    const double length = manifest.value("length", 1.0);
    std::vector<double> times = manifest.at("times").get<std::vector<double>>();
    std::vector<SpectralField> frames;
    std::vector<VelocityField> velocities;
    for (std::size_t i = 0; i < times.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu", i);
        frames.push_back(read_field(dir / (std::string("omega_") + name + ".ivlb"), length));
        velocities.push_back({read_field(dir / (std::string("u1_") + name + ".ivlb"), length),
                              read_field(dir / (std::string("u2_") + name + ".ivlb"), length)});
    }
    const TorusGrid g = frames.front().grid();
    return Trajectory(g, manifest.at("nu").get<double>(), manifest.at("dt").get<double>(), std::move(times),
                      std::move(frames), std::move(velocities));
}

}  // namespace ivlab
