#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ivlab/metrics.hpp"
#include "ivlab/spectral.hpp"

namespace ivlab {

enum class Domain { Torus, FreeSpace };

struct DatumSpec {
    std::string name = "taylor-green";
    std::map<std::string, double> params;
    friend bool operator==(const DatumSpec&, const DatumSpec&) = default;
};

struct CheckToggles {
    bool flows = false;
    bool stability = false;
    bool renormalization = false;
    bool enstrophy_bound = false;
    bool energy_sandwich = false;
    bool resolution_doubling = false;
    friend bool operator==(const CheckToggles&, const CheckToggles&) = default;
};

/// One experiment: a viscosity ladder for one datum. JSON with a fixed
/// schema; unknown keys are errors.
struct LadderConfig {
    Domain domain = Domain::Torus;
    DatumSpec initial_datum;
    std::vector<double> nus;
    double T = 1.0;
    int N = 64;
    double dt = 1e-3;
    /// Finite entries or kInfinity ("inf" in JSON).
    std::vector<double> p_list{2.0};
    int M = 16;
    std::uint64_t master_seed = 0;
    CheckToggles checks;
    std::string output_dir = "out";
    int checkpoints = 50;
    int flow_seeds = 32;
    /// Exponent of the enstrophy bound and energy sandwich.
    double bound_p = 1.2;
    double box_length = 4.0;
    /// Width of the flat zone of the renormalization test function.
    double beta_eta = 0.1;
    friend bool operator==(const LadderConfig&, const LadderConfig&) = default;
};

/// Throws ConfigError.
LadderConfig parse_config(const std::string& json_text);
LadderConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const LadderConfig& config);
/// Throws ConfigError on a broken invariant (nus decreasing and positive,
/// p_list in [1, inf], T > 0, datum integrability, ...).
void validate_config(const LadderConfig& config);

/// Mean-zero datum on a torus grid or a centred box. Names: taylor-green,
/// random-smooth, shear, vortex-patch, dipole, lp-singular. Throws
/// UnknownDatum, BadParams.
SpectralField initial_datum(const DatumSpec& spec, const TorusGrid& grid, std::uint64_t master_seed = 0);

/// One row per (nu, checkpoint); disabled quantities are NaN.
struct ReportRow {
    double nu = 0.0;
    double t = 0.0;
    std::vector<double> err_vort;
    double err_vel_l2 = 0.0;
    double energy = 0.0;
    double enstrophy = 0.0;
    double flow_dist = 0.0;
    double q_int = 0.0;
    double superlevel = 0.0;
    double y_val = 0.0;
    double renorm_defect = 0.0;
    double enstrophy_margin = 0.0;
    double energy_margin = 0.0;
};

struct LadderSummary {
    /// sup over checkpoints, one entry per nu.
    std::vector<std::vector<double>> sup_err_vort;  // [p][nu]
    std::vector<double> sup_err_vel;
    std::vector<double> eps;
    std::vector<double> energy_drop;  // ||u0||^2 - ||u(T)||^2
    std::vector<std::optional<RateFit>> vort_power, vort_log;
    std::optional<RateFit> vel_power, vel_log;
    /// max over checkpoints of ||w_N - w_2N||_p of the reference, first p.
    double resolution_discrepancy = 0.0;
    std::map<std::string, bool> checks;
};

struct ConvergenceReport {
    LadderConfig config;
    std::vector<ReportRow> rows;
    LadderSummary summary;
    bool complete = false;
    std::string failure;
};

/// Reference run (Euler on the torus, smallest nu in free space), one run
/// per nu, then flows and metrics per toggle. Ladder entries run on a pool
/// of `threads` workers with results merged in ladder order. On failure the
/// partial report is written with a failure marker and the error rethrown.
ConvergenceReport run_ladder(const LadderConfig& config, int threads = 1);

std::string report_csv(const ConvergenceReport& report);
std::string report_json(const ConvergenceReport& report);
/// Writes ladder.csv and summary.json to dir. Throws IoError.
void emit_report(const ConvergenceReport& report, const std::filesystem::path& dir);
/// Writes error_vs_nu.svg, envelope.svg and energy_vs_t.svg. Throws IoError.
void plot_report(const ConvergenceReport& report, const std::filesystem::path& dir);
/// Reads a ladder.csv back into rows (summary left empty). Throws FormatError, IoError.
ConvergenceReport read_report_csv(const std::filesystem::path& path, const LadderConfig& config);

/// Column names of the ladder CSV for the given p list.
std::vector<std::string> report_columns(const std::vector<double>& p_list);

}  // namespace ivlab
