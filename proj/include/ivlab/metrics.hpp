#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ivlab/flows.hpp"
#include "ivlab/pde.hpp"
#include "ivlab/spectral.hpp"

namespace ivlab {

/// ln(1 + |y|^2 / eps^2). Throws BadEps.
double q_eps(double y_norm, double eps);
double q_eps(Point y, double eps);

struct StabilityReport {
    double eps = 0.0;
    double q_integral = 0.0;
    double superlevel_measure = 0.0;
    double chebyshev_rhs = 0.0;
    double flow_distance = 0.0;
    double y_value = 0.0;
    /// superlevel_measure * ln(1 + 1/eps) <= q_integral on these samples.
    bool chebyshev_holds = true;
};

/// Compares the stochastic and deterministic flows at a stored time s, with
/// the geodesic distance d(X^nu, X). Throws MismatchedEnsembles, BadEps.
StabilityReport stability_report(const FlowEnsemble& det, const FlowEnsemble& stoch, double s, double eps);

/// x -> ln(2 - ln x) - ln 2 on (0, 1], and its inverse v -> exp(2 - 2 e^v).
double osgood_modulus(double x);
double osgood_inverse(double v);
/// Solution of y' = C y (2 - ln y), y(0) = alpha, evaluated through the
/// modulus: exp(2 - 2e^{-C tau}) alpha^{e^{-C tau}}. Throws BadAlpha.
double osgood_bound(double alpha, double C, double tau);

enum class FitMode { Power, Log };

/// Power mode: errors ~ prefactor * nu^exponent by log-log least squares,
/// residual = max log deviation. Log mode: errors ~ delta + c / |ln nu| by
/// linear least squares, residual = max absolute deviation; the upper
/// envelope (smallest total gap with every gap >= 0, delta >= 0, c >= 0) is also fitted.
struct RateFit {
    FitMode mode = FitMode::Power;
    std::vector<double> nus;
    std::vector<double> errors;
    double exponent = 0.0;
    double prefactor = 0.0;
    double delta = 0.0;
    double residual = 0.0;
    double envelope_delta = 0.0;
    double envelope_c = 0.0;
    /// envelope(nu_i) - errors_i for every ladder point.
    std::vector<double> envelope_residuals;
};

/// Throws InsufficientPoints, NonPositiveError, BadParams.
RateFit fit_rate(const std::vector<double>& nus, const std::vector<double>& errors, FitMode mode = FitMode::Power);

/// Smooth functions vanishing on [-eta, eta]: the family used to test
/// renormalization.
class Beta {
public:
    enum class Kind { TruncatedPower, ShiftedConvex, BoundedTanh, Custom };

    /// chi(|s|) |s|^q with chi a C^2 step from 0 at eta to 1 at 2 eta.
    static Beta truncated_power(double eta, double q);
    /// (|s| - eta)_+^q, convex for q >= 1 and C^2 for q >= 3.
    static Beta shifted_convex(double eta, double q = 3.0);
    /// chi(|s|) tanh(s / scale), bounded.
    static Beta bounded_tanh(double eta, double scale);
    /// Checked on a sample of [-eta, eta]. Throws BadBeta.
    static Beta custom(std::function<double(double)> f, double eta, bool convex, std::string name);

    double operator()(double s) const { return f_(s); }
    Kind kind() const { return kind_; }
    double eta() const { return eta_; }
    bool convex() const { return convex_; }
    const std::string& name() const { return name_; }

private:
    Beta(Kind kind, std::function<double(double)> f, double eta, bool convex, std::string name);

    Kind kind_;
    std::function<double(double)> f_;
    double eta_;
    bool convex_;
    std::string name_;
};

struct RenormalizationResult {
    std::vector<double> times;
    /// |int beta(w(t)) - int beta(w0)| for Euler, the signed drift for nu > 0.
    std::vector<double> defect;
    /// Largest increase of int beta(w) between consecutive checkpoints.
    double max_increase = 0.0;
    bool nonincreasing = true;
};

RenormalizationResult renormalization_defect(const Trajectory& traj, const Beta& beta, double tolerance = 1e-8);

/// Integral over |x| > r of |f|^q on a centred box grid.
double tail_mass(const SpectralField& f, double r, double q = 1.0);

struct Cutoff {
    SpectralField psi;
    /// max |grad psi| * r and max |Hessian psi|_F * r^2, from analytic derivatives at the nodes.
    double grad_bound = 0.0;
    double hess_bound = 0.0;
};

/// 0 on |x| < r, 1 on 2r < |x| < R, 0 on |x| > 2R. Throws BadRadii.
Cutoff make_cutoff(double r, double R, const TorusGrid& grid);

struct BoundCheck {
    std::vector<double> times;
    std::vector<double> rhs;
    std::vector<double> margin;
    double worst_relative = 0.0;
    bool holds = true;
};

/// ||w(t)||_2^2 <= (A + B t)^{-(2-p)/p}, A = ||w0||_2^{-2p/(2-p)},
/// B = 2 nu p C0 / (2 - p), C0 = ||w0||_p^{-2p/(2-p)}. Throws BadExponent.
BoundCheck enstrophy_bound_check(const Trajectory& traj, double p, double slack = 1e-6);

struct EnergySandwich {
    std::vector<double> times;
    std::vector<double> drop;          // ||u(t)||^2 - ||u0||^2
    std::vector<double> lower_bound;   // the negative right-hand side
    std::vector<double> upper_margin;  // -drop
    std::vector<double> lower_margin;  // drop - lower_bound
    bool holds = true;
};

/// 0 >= ||u(t)||^2 - ||u0||^2 >= -(2-p)/(2 C0 (p-1)) [(A+Bt)^{2(p-1)/p} - A^{2(p-1)/p}],
/// with slack relative to ||u0||^2. Throws BadExponent.
EnergySandwich energy_drop_check(const Trajectory& traj, double p, double slack = 1e-6);

/// int_0^T ||a(t) - b(t)||_{L^1} dt by the trapezoid rule on shared checkpoints.
double l1l1_velocity_distance(const Trajectory& a, const Trajectory& b);
/// max(sqrt(nu), distance).
double select_eps(double nu, double l1l1_distance);

/// max over the two axes of ||w(. + h e_i) - w||_1 for each grid shift h.
std::vector<double> translation_modulus(const SpectralField& omega, const std::vector<int>& shifts);

/// Per-checkpoint ||a(t) - b(t)||_p, with b resampled to a's grid; the two
/// trajectories must share checkpoint times.
std::vector<double> lp_errors(const Trajectory& a, const Trajectory& b, double p);
std::vector<double> velocity_l2_errors(const Trajectory& a, const Trajectory& b);

}  // namespace ivlab
