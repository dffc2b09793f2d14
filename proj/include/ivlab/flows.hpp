#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "ivlab/pde.hpp"
#include "ivlab/spectral.hpp"

namespace ivlab {

/// A point of the torus, coordinates always in [0,1).
struct TorusPoint {
    double x1 = 0.0;
    double x2 = 0.0;

    static TorusPoint wrap(double x1, double x2);
    static TorusPoint wrap(Point p) { return wrap(p.x1, p.x2); }
};

/// Geodesic distance on the unit torus: min over integer shifts of |x - y - k|.
double geodesic_distance(TorusPoint x, TorusPoint y);
/// Componentwise shortest displacement y - x, each entry in [-1/2, 1/2].
Point geodesic_displacement(TorusPoint x, TorusPoint y);

/// Counter-based generator: stream (master, seed, replica) is a SplitMix64
/// sequence whose starting state is a hash of the three keys.
class StreamRng {
public:
    using result_type = std::uint64_t;
    StreamRng(std::uint64_t master, std::uint64_t seed_index, std::uint64_t replica);
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()();

private:
    std::uint64_t state_;
};

/// Positions X_{t,s}(x) at stored times s for a uniform grid of seeds.
/// Paths are kept unwrapped; wrapped positions are derived on access.
class FlowEnsemble {
public:
    FlowEnsemble() = default;
    FlowEnsemble(int n_seed, double t, double nu, int replicas, std::uint64_t master_seed, bool stochastic,
                 std::vector<double> s_values, std::vector<std::vector<Point>> lifts);

    /// Deterministic ensemble with seeds at s = t and the given endpoints at s = 0.
    static FlowEnsemble from_positions(int n_seed, double t, std::vector<Point> endpoints);

    int n_seed() const { return n_seed_; }
    std::size_t seed_count() const { return static_cast<std::size_t>(n_seed_) * n_seed_; }
    double t() const { return t_; }
    double nu() const { return nu_; }
    int replicas() const { return replicas_; }
    std::uint64_t master_seed() const { return master_seed_; }
    bool stochastic() const { return stochastic_; }
    const std::vector<double>& s_values() const { return s_values_; }

    Point seed(std::size_t i) const;
    /// Index into s_values; throws TimeRangeExceeded when s is not stored.
    std::size_t s_index(double s) const;
    /// Unwrapped path value of replica r of seed i at stored slot k.
    Point lift(std::size_t k, std::size_t i, int r = 0) const {
        return lifts_[k][i * static_cast<std::size_t>(replicas_) + r];
    }
    TorusPoint position(std::size_t k, std::size_t i, int r = 0) const { return TorusPoint::wrap(lift(k, i, r)); }
    const std::vector<Point>& lifts(std::size_t k) const { return lifts_[k]; }

private:
    int n_seed_ = 0;
    double t_ = 0.0;
    double nu_ = 0.0;
    int replicas_ = 1;
    std::uint64_t master_seed_ = 0;
    bool stochastic_ = false;
    std::vector<double> s_values_;
    std::vector<std::vector<Point>> lifts_;
};

struct FlowOptions {
    /// Times s at which positions are kept; t and 0 are always included.
    std::vector<double> store_s;
    int threads = 1;
};

/// RK4 for d/ds X = u(s, X) from s = t down to 0 with the carrier step.
/// Throws TimeRangeExceeded.
FlowEnsemble integrate_backward_flow(const Trajectory& carrier, double t, int n_seed,
                                     const FlowOptions& options = {});

/// Euler-Maruyama backward in s with noise sqrt(2 nu) dW. Throws
/// TimeRangeExceeded, BadParams.
FlowEnsemble integrate_stochastic_flow(const Trajectory& carrier, double t, double nu, int n_seed, int replicas,
                                       std::uint64_t master_seed, const FlowOptions& options = {});

/// omega0(X_{t,0}(x)) on the seed grid. Throws StochasticFlowNotAllowed.
SpectralField lagrangian_vorticity(const SpectralField& omega0, const FlowEnsemble& flow);

struct FeynmanKacField {
    SpectralField mean;
    SpectralField std_error;
    double mean_std_error = 0.0;
};

/// Replica average of omega0(X^nu_{t,0}(x)) with per-point standard error.
/// Throws DeterministicFlowNotAllowed.
FeynmanKacField feynman_kac_vorticity(const SpectralField& omega0, const FlowEnsemble& flow, int threads = 1);

/// max over cells x cells bins of |count - uniform| / uniform, using the
/// endpoints at s = 0 pooled over replicas.
double measure_preservation_defect(const FlowEnsemble& flow, int cells);

void save_ensemble(const std::filesystem::path& dir, const FlowEnsemble& flow);
FlowEnsemble load_ensemble(const std::filesystem::path& dir);

}  // namespace ivlab
