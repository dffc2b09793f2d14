#include "ivlab/freespace.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#include "ivlab/error.hpp"
#include "ivlab/io.hpp"
#include "ivlab/smoothstep.hpp"

namespace ivlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int offset_of(int row, int padded) { return row < padded / 2 ? row : row - padded; }

// Transform of f zero-padded into the top-left block of the (2n)^2 lattice.
Spectrum padded_spectrum(const SpectralField& f, const PaddedGrid& g) {
    const int n = g.n, m = g.padded();
    std::vector<double> buf(static_cast<std::size_t>(m) * m, 0.0);
    const auto v = f.values();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) buf[static_cast<std::size_t>(i) * m + j] = v[static_cast<std::size_t>(i) * n + j];
    return forward_transform(m, buf);
}

// Inverse of a product of padded transforms, cropped to the box and scaled to a
// quadrature sum.
SpectralField finish(const Spectrum& product, const PaddedGrid& g) {
    const int n = g.n, m = g.padded();
    const std::vector<double> full = inverse_transform(product);
    const double scale = static_cast<double>(m) * m * g.spacing() * g.spacing();
    std::vector<double> out(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(i) * n + j] = scale * full[static_cast<std::size_t>(i) * m + j];
    return SpectralField(g.box(), std::move(out));
}

void accumulate(Spectrum& acc, const Spectrum& a, const Spectrum& b) {
    auto o = acc.data();
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += x[i] * y[i];
}

PaddedGrid padded_of(const SpectralField& f) {
    const TorusGrid& g = f.grid();
    if (std::abs(g.origin + g.length / 2.0) > 1e-12 * g.length) {
        throw Error(ErrorCode::GridMismatch, "free-space fields live on a centred box");
    }
    return PaddedGrid::make(g.n, g.length);
}

void require_grid(const PaddedGrid& a, const PaddedGrid& b) {
    if (a.n != b.n || a.length != b.length) throw Error(ErrorCode::ShapeMismatch, "kernel and field grids differ");
}

// Radial factor b = 1 - a and its first two radial derivatives.
struct Radial {
    double b, b1, b2;
};

Radial far_factor(double r, const CutoffRadii& c) {
    const double w = c.r2 - c.r1;
    const double t = (r - c.r1) / w;
    return {smoothstep(t), smoothstep_d1(t) / w, smoothstep_d2(t) / (w * w)};
}

// Derivatives of b(r) (m.x)/r^2 / 2pi at x, m = (0,-1) for i = 0, (1,0) for i = 1.
struct FarDerivatives {
    double g;
    double hess[2][2];
};

FarDerivatives far_derivatives(int comp, double x1, double x2, const CutoffRadii& c) {
    FarDerivatives out{};
    const double r2 = x1 * x1 + x2 * x2;
    if (r2 == 0.0) return out;
    const double r = std::sqrt(r2);
    const Radial rb = far_factor(r, c);
    if (rb.b == 0.0 && rb.b1 == 0.0) return out;
    const double x[2] = {x1, x2};
    const double m[2] = {comp == 0 ? 0.0 : 1.0, comp == 0 ? -1.0 : 0.0};
    const double mx = m[0] * x1 + m[1] * x2;
    const double r4 = r2 * r2, r6 = r4 * r2;
    const double f = mx / r2;
    double df[2], db[2];
    for (int j = 0; j < 2; ++j) {
        df[j] = m[j] / r2 - 2.0 * mx * x[j] / r4;
        db[j] = rb.b1 * x[j] / r;
    }
    out.g = rb.b * f / kTwoPi;
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
            const double delta = j == k ? 1.0 : 0.0;
            const double d2f = -2.0 * (m[j] * x[k] + m[k] * x[j]) / r4 - 2.0 * mx * delta / r4 +
                               8.0 * mx * x[j] * x[k] / r6;
            const double d2b = rb.b2 * x[j] * x[k] / r2 + rb.b1 * (delta / r - x[j] * x[k] / (r2 * r));
            out.hess[j][k] = (d2b * f + db[j] * df[k] + db[k] * df[j] + rb.b * d2f) / kTwoPi;
        }
    return out;
}

double full_kernel(int comp, double x1, double x2) {
    const double r2 = x1 * x1 + x2 * x2;
    if (r2 == 0.0) return 0.0;
    return (comp == 0 ? -x2 : x1) / (kTwoPi * r2);
}

std::shared_ptr<KernelPair> assemble(const PaddedGrid& grid, const CutoffRadii& radii,
                                     const std::vector<std::vector<double>>* loaded) {
    auto kp = std::make_shared<KernelPair>();
    kp->grid = grid;
    kp->radii = radii;
    const int m = grid.padded();
    const double h = grid.spacing();
    const std::size_t total = static_cast<std::size_t>(m) * m;
    std::vector<std::vector<double>> s(16, std::vector<double>(total, 0.0));
    if (loaded) {
        s = *loaded;
    } else {
        for (int a = 0; a < m; ++a) {
            const double x1 = offset_of(a, m) * h;
            for (int b = 0; b < m; ++b) {
                const double x2 = offset_of(b, m) * h;
                const std::size_t idx = static_cast<std::size_t>(a) * m + b;
                for (int i = 0; i < 2; ++i) {
                    const double k = full_kernel(i, x1, x2);
                    const FarDerivatives fd = far_derivatives(i, x1, x2, radii);
                    s[i][idx] = k;
                    s[4 + i][idx] = fd.g;
                    s[2 + i][idx] = (1.0 - far_factor(std::hypot(x1, x2), radii).b) * k;
                    // (grad^perp g)_1 = -d2 g, (grad^perp g)_2 = d1 g.
                    for (int j = 0; j < 2; ++j) {
                        s[6 + 4 * i + 2 * j + 0][idx] = -fd.hess[j][1];
                        s[6 + 4 * i + 2 * j + 1][idx] = fd.hess[j][0];
                    }
                    s[14 + i][idx] = fd.hess[0][0] + fd.hess[1][1];
                }
            }
        }
    }
    for (int i = 0; i < 2; ++i) {
        kp->full[i] = ConvolutionKernel::from_samples(grid, s[i]);
        kp->near[i] = ConvolutionKernel::from_samples(grid, s[2 + i]);
        kp->far[i] = ConvolutionKernel::from_samples(grid, s[4 + i]);
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                kp->far_hessian[i][j][k] = ConvolutionKernel::from_samples(grid, s[6 + 4 * i + 2 * j + k]);
        kp->far_laplacian[i] = ConvolutionKernel::from_samples(grid, s[14 + i]);
    }
    double h2 = 0.0;
    for (int idx = 6; idx < 14; ++idx)
        for (double v : s[idx]) h2 += v * v;
    kp->hessian_l2 = std::sqrt(h2 * h * h);
    double l1 = 0.0, l2 = 0.0;
    for (int i = 0; i < 2; ++i) {
        l1 += kp->far_laplacian[i].lq_norm(1.0);
        const double n2 = kp->far_laplacian[i].lq_norm(2.0);
        l2 += n2 * n2;
    }
    kp->laplacian_l1 = l1;
    kp->laplacian_l2 = std::sqrt(l2);
    return kp;
}

std::filesystem::path cache_file(const PaddedGrid& g, const CutoffRadii& c) {
    const char* dir = std::getenv("INVISCID_LAB_CACHE");
    if (!dir || !*dir) return {};
    char name[160];
    std::snprintf(name, sizeof name, "kernels_n%d_L%.9g_r%.9g_%.9g.ivlb", g.n, g.length, c.r1, c.r2);
    return std::filesystem::path(dir) / name;
}

bool try_load(const std::filesystem::path& path, int m, std::vector<std::vector<double>>& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    out.clear();
    try {
        for (int r = 0; r < 16; ++r) {
            RawRecord rec = read_record(in);
            if (static_cast<int>(rec.n) != m || rec.kind != PayloadKind::Kernel) return false;
            out.push_back(std::move(rec.values));
        }
    } catch (const Error&) {
        return false;
    }
    return true;
}

void store(const std::filesystem::path& path, const KernelPair& kp) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) return;
        const auto m = static_cast<std::uint32_t>(kp.grid.padded());
        auto put = [&](const ConvolutionKernel& k) { write_record(out, m, PayloadKind::Kernel, k.samples()); };
        for (int i = 0; i < 2; ++i) put(kp.full[i]);
        for (int i = 0; i < 2; ++i) put(kp.near[i]);
        for (int i = 0; i < 2; ++i) put(kp.far[i]);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k) put(kp.far_hessian[i][j][k]);
        for (int i = 0; i < 2; ++i) put(kp.far_laplacian[i]);
    }
    std::filesystem::rename(tmp, path, ec);
}

}  // namespace

PaddedGrid PaddedGrid::make(int n, double length) {
    if (n < 8 || (n & (n - 1)) != 0) throw Error(ErrorCode::BadParams, "box size must be a power of two >= 8");
    if (!(length > 0.0)) throw Error(ErrorCode::BadParams, "box length must be positive");
    return PaddedGrid{n, length};
}

ConvolutionKernel ConvolutionKernel::from_samples(const PaddedGrid& grid, std::vector<double> samples) {
    const int m = grid.padded();
    if (samples.size() != static_cast<std::size_t>(m) * m) {
        throw Error(ErrorCode::ShapeMismatch, "kernel samples must cover the padded lattice");
    }
    ConvolutionKernel k;
    k.grid_ = grid;
    k.spectrum_ = forward_transform(m, samples);
    k.samples_ = std::move(samples);
    return k;
}

ConvolutionKernel ConvolutionKernel::from_function(const PaddedGrid& grid,
                                                   const std::function<double(double, double)>& f) {
    const int m = grid.padded();
    const double h = grid.spacing();
    std::vector<double> s(static_cast<std::size_t>(m) * m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) s[static_cast<std::size_t>(a) * m + b] = f(offset_of(a, m) * h, offset_of(b, m) * h);
    return from_samples(grid, std::move(s));
}

ConvolutionKernel ConvolutionKernel::from_field(const SpectralField& f) {
    const PaddedGrid grid = padded_of(f);
    const int n = grid.n, m = grid.padded();
    std::vector<double> s(static_cast<std::size_t>(m) * m, 0.0);
    for (int a = 0; a < m; ++a) {
        const int i = offset_of(a, m) + n / 2;
        if (i < 0 || i >= n) continue;
        for (int b = 0; b < m; ++b) {
            const int j = offset_of(b, m) + n / 2;
            if (j < 0 || j >= n) continue;
            s[static_cast<std::size_t>(a) * m + b] = f(i, j);
        }
    }
    return from_samples(grid, std::move(s));
}

double ConvolutionKernel::lq_norm(double q) const {
    if (!(q >= 1.0)) throw Error(ErrorCode::BadExponent, "kernel norms need q >= 1");
    double sum = 0.0;
    for (double v : samples_) sum += std::pow(std::abs(v), q);
    return std::pow(sum * grid_.spacing() * grid_.spacing(), 1.0 / q);
}

SpectralField ConvolutionKernel::convolve(const SpectralField& f) const {
    require_grid(grid_, padded_of(f));
    Spectrum acc(grid_.padded());
    accumulate(acc, spectrum_, padded_spectrum(f, grid_));
    return finish(acc, grid_);
}

SpectralField star_convolution(const std::vector<ConvolutionKernel>& v, const std::vector<SpectralField>& w) {
    if (v.empty() || v.size() != w.size()) throw Error(ErrorCode::ShapeMismatch, "operands differ in length");
    const PaddedGrid grid = v.front().grid();
    Spectrum acc(grid.padded());
    for (std::size_t i = 0; i < v.size(); ++i) {
        require_grid(grid, v[i].grid());
        require_grid(grid, padded_of(w[i]));
        accumulate(acc, v[i].spectrum(), padded_spectrum(w[i], grid));
    }
    return finish(acc, grid);
}

SpectralField star_convolution(const std::vector<SpectralField>& v, const std::vector<SpectralField>& w) {
    if (v.size() != w.size()) throw Error(ErrorCode::ShapeMismatch, "operands differ in length");
    std::vector<ConvolutionKernel> k;
    k.reserve(v.size());
    for (const auto& f : v) k.push_back(ConvolutionKernel::from_field(f));
    return star_convolution(k, w);
}

SpectralField star_convolution(const std::array<std::array<ConvolutionKernel, 2>, 2>& a,
                               const std::array<std::array<SpectralField, 2>, 2>& b) {
    return star_convolution(std::vector<ConvolutionKernel>{a[0][0], a[0][1], a[1][0], a[1][1]},
                            std::vector<SpectralField>{b[0][0], b[0][1], b[1][0], b[1][1]});
}

std::shared_ptr<const KernelPair> build_kernels(const PaddedGrid& grid, const CutoffRadii& radii) {
    if (!(radii.r1 > 0.0 && radii.r2 > radii.r1)) throw Error(ErrorCode::BadCutoff, "need 0 < r1 < r2");
    if (grid.length / 2.0 < 2.0 * radii.r2 * (1.0 - 1e-12)) {
        throw Error(ErrorCode::BadCutoff, "box half-width must be at least twice the outer cutoff radius");
    }
    static std::mutex mutex;
    static std::map<std::tuple<int, double, double, double>, std::shared_ptr<const KernelPair>> memo;
    const auto key = std::make_tuple(grid.n, grid.length, radii.r1, radii.r2);
    std::lock_guard lock(mutex);
    if (auto it = memo.find(key); it != memo.end()) return it->second;

    const auto path = cache_file(grid, radii);
    std::shared_ptr<KernelPair> kp;
    std::vector<std::vector<double>> loaded;
    if (!path.empty() && try_load(path, grid.padded(), loaded)) {
        kp = assemble(grid, radii, &loaded);
    } else {
        kp = assemble(grid, radii, nullptr);
        if (!path.empty()) store(path, *kp);
    }
    memo[key] = kp;
    return kp;
}

VelocityField biot_savart_freespace(const SpectralField& omega, const KernelPair& kernels, double tolerance) {
    const PaddedGrid grid = padded_of(omega);
    require_grid(kernels.grid, grid);
    const TorusGrid box = grid.box();
    const double scale = omega.max_abs();
    const double r = grid.support_radius();
    for (int i = 0; i < box.n; ++i)
        for (int j = 0; j < box.n; ++j) {
            if (std::hypot(box.coord(i), box.coord(j)) < r) continue;
            if (std::abs(omega(i, j)) > tolerance * scale) {
                throw Error(ErrorCode::SupportViolation, "vorticity reaches outside a quarter of the box");
            }
        }
    return freespace_velocity_operator(std::shared_ptr<const KernelPair>(&kernels, [](const KernelPair*) {}))(omega);
}

VelocityOperator freespace_velocity_operator(std::shared_ptr<const KernelPair> kernels) {
    return [kernels](const SpectralField& omega) {
        const PaddedGrid& g = kernels->grid;
        const Spectrum w = padded_spectrum(omega, g);
        VelocityField u;
        for (int i = 0; i < 2; ++i) {
            Spectrum acc(g.padded());
            accumulate(acc, kernels->full[i].spectrum(), w);
            (i == 0 ? u.u1 : u.u2) = finish(acc, g);
        }
        return u;
    };
}

Trajectory solve_freespace(const SpectralField& omega0, double nu, double T, const SolverSettings& settings,
                           std::shared_ptr<const KernelPair> kernels, const CheckpointObserver& observer,
                           bool store_frames) {
    biot_savart_freespace(omega0, *kernels);
    SolveHooks hooks;
    hooks.velocity = freespace_velocity_operator(std::move(kernels));
    hooks.observer = observer;
    hooks.store_frames = store_frames;
    return solve_vorticity(omega0, nu, T, settings, hooks);
}

SpectralField finite_difference_curl(const VelocityField& u) {
    const TorusGrid& g = u.grid();
    const int n = g.n;
    const double h = g.spacing();
    std::vector<double> out(g.size());
    auto w = [n](int i) { return (i + n) % n; };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double d1u2 = (-u.u2(w(i + 2), j) + 8.0 * u.u2(w(i + 1), j) - 8.0 * u.u2(w(i - 1), j) +
                                 u.u2(w(i - 2), j)) /
                                (12.0 * h);
            const double d2u1 = (-u.u1(i, w(j + 2)) + 8.0 * u.u1(i, w(j + 1)) - 8.0 * u.u1(i, w(j - 1)) +
                                 u.u1(i, w(j - 2))) /
                                (12.0 * h);
            out[static_cast<std::size_t>(i) * n + j] = d1u2 - d2u1;
        }
    return SpectralField(g, std::move(out));
}

void SerfatiAccumulator::add(double t, const SpectralField& omega, const VelocityField& u) {
    auto products = [&](const VelocityField& v) {
        std::array<std::array<SpectralField, 2>, 2> p;
        const SpectralField* c[2] = {&v.u1, &v.u2};
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) p[j][k] = multiply(*c[j], *c[k]);
        return p;
    };
    if (count_ == 0) {
        t0_ = t_last_ = t;
        omega0_ = omega_last_ = omega;
        u0_ = u_last_ = u;
        for (auto& row : uu_)
            for (auto& f : row) f = SpectralField::zeros(omega.grid());
        w_int_ = SpectralField::zeros(omega.grid());
        count_ = 1;
        return;
    }
    const double dt = t - t_last_;
    if (!(dt > 0.0)) throw Error(ErrorCode::HistoryGap, "checkpoint times must increase");
    if (count_ == 1) {
        spacing_ = dt;
    } else if (std::abs(dt - spacing_) > 1e-6 * spacing_) {
        throw Error(ErrorCode::HistoryGap, "checkpoints must be uniformly spaced");
    }
    const auto prev = products(u_last_);
    const auto cur = products(u);
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) uu_[j][k] = uu_[j][k] + (0.5 * dt) * (prev[j][k] + cur[j][k]);
    w_int_ = w_int_ + (0.5 * dt * nu_) * (omega_last_ + omega);
    t_last_ = t;
    omega_last_ = omega;
    u_last_ = u;
    ++count_;
}

CheckpointObserver SerfatiAccumulator::observer() {
    return [this](double t, const SpectralField& omega, const VelocityField& u) { add(t, omega, u); };
}

SerfatiTerms serfati_rhs(const SerfatiAccumulator& acc, const KernelPair& kernels) {
    if (acc.count() == 0) throw Error(ErrorCode::HistoryGap, "no checkpoints recorded");
    SerfatiTerms out;
    out.t = acc.t();
    out.u0 = acc.u0();
    out.u = acc.u();
    if (acc.count() == 1) {
        out.near = out.transport = out.viscous = VelocityField::zeros(acc.u0().grid());
        out.rhs = out.u0;
        out.residual = 0.0;
        return out;
    }
    const SpectralField dw = acc.omega() - acc.omega0();
    SpectralField comp[4][2];
    for (int i = 0; i < 2; ++i) {
        comp[0][i] = kernels.near[i].convolve(dw);
        comp[1][i] = -1.0 * star_convolution(kernels.far_hessian[i], acc.uu_integral());
        comp[2][i] = kernels.far_laplacian[i].convolve(acc.omega_integral());
    }
    out.near = {comp[0][0], comp[0][1]};
    out.transport = {comp[1][0], comp[1][1]};
    out.viscous = {comp[2][0], comp[2][1]};
    out.rhs = {out.u0.u1 + out.near.u1 + out.transport.u1 + out.viscous.u1,
               out.u0.u2 + out.near.u2 + out.transport.u2 + out.viscous.u2};
    const double num = lp_norm(out.rhs - out.u, 2.0);
    const double den = lp_norm(out.u, 2.0);
    out.residual = den > 0.0 ? num / den : num;
    return out;
}

ZeroMeanReport zero_mean_check(const SpectralField& omega0) {
    ZeroMeanReport r;
    const double a = omega0.grid().cell_area();
    for (double v : omega0.values()) {
        r.integral += v * a;
        r.l1 += std::abs(v) * a;
    }
    r.zero_mean = std::abs(r.integral) <= 1e-10 * r.l1;
    return r;
}

}  // namespace ivlab
