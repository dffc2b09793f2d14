#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "ivlab/error.hpp"
#include "ivlab/experiment.hpp"

namespace ivlab {

namespace {

using nlohmann::json;

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string p_label(double p) {
    if (std::isinf(p)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", p);
    return buf;
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json fit_json(const std::optional<RateFit>& f) {
    if (!f) return nullptr;
    json j;
    j["mode"] = f->mode == FitMode::Power ? "power" : "log";
    j["nus"] = f->nus;
    j["errors"] = f->errors;
    j["exponent"] = f->exponent;
    j["prefactor"] = f->prefactor;
    j["delta"] = f->delta;
    j["residual"] = f->residual;
    j["envelope_delta"] = f->envelope_delta;
    j["envelope_c"] = f->envelope_c;
    j["envelope_residuals"] = f->envelope_residuals;
    return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

// Minimal static line chart.
struct Series {
    std::string label;
    std::vector<double> x, y;
    bool dashed = false;
};

std::string svg_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                      const std::vector<Series>& series, bool logx, bool logy) {
    constexpr double W = 640, H = 420, L = 80, R = 170, T = 40, B = 60;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
    auto tx = [logx](double v) { return logx ? std::log10(v) : v; };
    auto ty = [logy](double v) { return logy ? std::log10(v) : v; };
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const Series& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if ((logx && s.x[i] <= 0) || (logy && s.y[i] <= 0)) continue;
            x0 = std::min(x0, tx(s.x[i]));
            x1 = std::max(x1, tx(s.x[i]));
            y0 = std::min(y0, ty(s.y[i]));
            y1 = std::max(y1, ty(s.y[i]));
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
    auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
        const double sx = L + (W - L - R) * k / 4.0, sy = H - B - (H - T - B) * k / 4.0;
        char lx[32], ly[32];
        std::snprintf(lx, sizeof lx, "%.3g", logx ? std::pow(10.0, fx) : fx);
        std::snprintf(ly, sizeof ly, "%.3g", logy ? std::pow(10.0, fy) : fy);
        o << "<text x=\"" << sx << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << lx << "</text>\n";
        o << "<text x=\"" << L - 6 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">" << ly << "</text>\n";
    }
    o << "<text x=\"" << L + (W - L - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << xlabel
      << "</text>\n";
    o << "<text x=\"18\" y=\"" << T + (H - T - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << T + (H - T - B) / 2 << ")\">" << ylabel << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* c = colors[s % 7];
        o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\""
          << (series[s].dashed ? " stroke-dasharray=\"5,4\"" : "") << " points=\"";
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            const double xv = series[s].x[i], yv = series[s].y[i];
            if (!std::isfinite(xv) || !std::isfinite(yv) || (logx && xv <= 0) || (logy && yv <= 0)) continue;
            o << px(xv) << "," << py(yv) << " ";
        }
        o << "\"/>\n";
        const double ly = T + 16 + 18 * static_cast<double>(s);
        o << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly - 4
          << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << W - R + 36 << "\" y=\"" << ly << "\">" << series[s].label << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace

std::vector<std::string> report_columns(const std::vector<double>& p_list) {
    std::vector<std::string> cols{"nu", "t"};
    for (double p : p_list) cols.push_back("err_vort_p" + p_label(p));
    for (const char* c : {"err_vel_l2", "energy", "enstrophy", "flow_dist", "q_int", "superlevel", "y_val",
                          "renorm_defect", "enstrophy_margin", "energy_margin"})
        cols.emplace_back(c);
    return cols;
}

std::string report_csv(const ConvergenceReport& report) {
    std::ostringstream o;
    const auto cols = report_columns(report.config.p_list);
    for (std::size_t i = 0; i < cols.size(); ++i) o << (i ? "," : "") << cols[i];
    o << "\n";
    for (const ReportRow& r : report.rows) {
        o << fmt(r.nu) << "," << fmt(r.t);
        for (double e : r.err_vort) o << "," << fmt(e);
        for (double v : {r.err_vel_l2, r.energy, r.enstrophy, r.flow_dist, r.q_int, r.superlevel, r.y_val,
                         r.renorm_defect, r.enstrophy_margin, r.energy_margin})
            o << "," << fmt(v);
        o << "\n";
    }
    return o.str();
}

std::string report_json(const ConvergenceReport& report) {
    const LadderSummary& s = report.summary;
    json j;
    j["status"] = report.complete ? "complete" : "failed";
    if (!report.complete) j["failure"] = report.failure;
    j["config"] = json::parse(serialize_config(report.config));
    j["rows"] = report.rows.size();
    j["nus"] = report.config.nus;
    json per_p = json::array();
    for (std::size_t q = 0; q < report.config.p_list.size(); ++q) {
        json e;
        e["p"] = std::isinf(report.config.p_list[q]) ? json("inf") : json(report.config.p_list[q]);
        e["sup_error"] = q < s.sup_err_vort.size() ? json(s.sup_err_vort[q]) : json::array();
        e["power"] = q < s.vort_power.size() ? fit_json(s.vort_power[q]) : json(nullptr);
        e["log"] = q < s.vort_log.size() ? fit_json(s.vort_log[q]) : json(nullptr);
        per_p.push_back(e);
    }
    j["vorticity"] = per_p;
    j["velocity"] = {{"sup_error", s.sup_err_vel}, {"power", fit_json(s.vel_power)}, {"log", fit_json(s.vel_log)}};
    json eps = json::array();
    for (double v : s.eps) eps.push_back(number(v));
    j["eps"] = eps;
    j["energy_drop"] = s.energy_drop;
    j["resolution_discrepancy"] = report.config.checks.resolution_doubling ? json(s.resolution_discrepancy)
                                                                          : json(nullptr);
    j["checks"] = s.checks;
    j["assumed"] = json::array({"weak-* convergence of the velocity family in L^inf(0,T; L^2) is a hypothesis "
                                "on the continuum family and is not checked on the grid"});
    return j.dump(2) + "\n";
}

void emit_report(const ConvergenceReport& report, const std::filesystem::path& dir) {
    write_text(dir / "ladder.csv", report_csv(report));
    write_text(dir / "summary.json", report_json(report));
}

void plot_report(const ConvergenceReport& report, const std::filesystem::path& dir) {
    const LadderConfig& c = report.config;
    LadderSummary s = report.summary;
    if (s.sup_err_vort.empty() && !report.rows.empty()) {
        s.sup_err_vort.assign(c.p_list.size(), std::vector<double>(c.nus.size(), 0.0));
        s.sup_err_vel.assign(c.nus.size(), 0.0);
        for (const ReportRow& r : report.rows) {
            const auto it = std::find(c.nus.begin(), c.nus.end(), r.nu);
            if (it == c.nus.end()) continue;
            const auto e = static_cast<std::size_t>(it - c.nus.begin());
            for (std::size_t q = 0; q < c.p_list.size(); ++q) s.sup_err_vort[q][e] = std::max(s.sup_err_vort[q][e], r.err_vort[q]);
            s.sup_err_vel[e] = std::max(s.sup_err_vel[e], r.err_vel_l2);
        }
    }
    std::vector<Series> err;
    for (std::size_t q = 0; q < s.sup_err_vort.size(); ++q)
        err.push_back({"vorticity L^" + p_label(c.p_list[q]), c.nus, s.sup_err_vort[q]});
    if (!s.sup_err_vel.empty()) err.push_back({"velocity L^2", c.nus, s.sup_err_vel});
    write_text(dir / "error_vs_nu.svg", svg_chart("sup-in-time error vs viscosity", "nu", "error", err, true, true));

    std::vector<Series> env;
    if (!s.vort_log.empty() && s.vort_log.front()) {
        const RateFit& f = *s.vort_log.front();
        Series data{"measured", {}, f.errors};
        Series line{"envelope", {}, {}, true};
        for (std::size_t i = 0; i < f.nus.size(); ++i) {
            const double x = 1.0 / std::abs(std::log(f.nus[i]));
            data.x.push_back(x);
            line.x.push_back(x);
            line.y.push_back(f.envelope_delta + f.envelope_c * x);
        }
        env = {data, line};
    }
    write_text(dir / "envelope.svg",
               svg_chart("log envelope delta + C/|ln nu|", "1/|ln nu|", "sup error", env, false, false));

    std::vector<Series> en;
    for (double nu : c.nus) {
        Series sr{"nu=" + p_label(nu), {}, {}};
        for (const ReportRow& r : report.rows)
            if (r.nu == nu) {
                sr.x.push_back(r.t);
                sr.y.push_back(r.energy);
            }
        en.push_back(sr);
    }
    write_text(dir / "energy_vs_t.svg", svg_chart("kinetic energy", "t", "||u||^2", en, false, false));
}

ConvergenceReport read_report_csv(const std::filesystem::path& path, const LadderConfig& config) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    ConvergenceReport report;
    report.config = config;
    const auto cols = report_columns(config.p_list);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::FormatError, "empty report");
    std::string expected;
    for (std::size_t i = 0; i < cols.size(); ++i) expected += (i ? "," : "") + cols[i];
    if (line != expected) throw Error(ErrorCode::FormatError, "report header does not match the config");
    const std::size_t np = config.p_list.size();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> v;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                v.push_back(cell == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(cell));
            } catch (const std::exception&) {
                throw Error(ErrorCode::FormatError, "bad number '" + cell + "'");
            }
        }
        if (v.size() != cols.size()) throw Error(ErrorCode::FormatError, "row has the wrong column count");
        ReportRow r;
        r.nu = v[0];
        r.t = v[1];
        r.err_vort.assign(v.begin() + 2, v.begin() + 2 + static_cast<long>(np));
        std::size_t k = 2 + np;
        for (double* f : {&r.err_vel_l2, &r.energy, &r.enstrophy, &r.flow_dist, &r.q_int, &r.superlevel, &r.y_val,
                          &r.renorm_defect, &r.enstrophy_margin, &r.energy_margin})
            *f = v[k++];
        report.rows.push_back(r);
    }
    report.complete = true;
    return report;
}

}  // namespace ivlab
