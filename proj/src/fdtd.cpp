#include "qdcav/fdtd.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qdcav/binfile.hpp"
#include "qdcav/constants.hpp"
#include "qdcav/error.hpp"

namespace qdcav::fdtd {

namespace {

constexpr double kBlowup = 1e30;
constexpr long kFiniteCheckEvery = 16;

// Exponential-differencing coefficients for dF/dt + s F = rate * R.
void pml_coeffs(double s, double dt, double rate_dt, double& a, double& b) {
    a = std::exp(-s * dt);
    b = (s * dt > 1e-12) ? (1.0 - a) / (s * dt) * rate_dt : rate_dt;
}

}  // namespace

std::string to_string(Component c) {
    switch (c) {
        case Component::Hz: return "Hz";
        case Component::Ex: return "Ex";
        case Component::Ey: return "Ey";
    }
    return "?";
}

Component component_from_string(const std::string& s) {
    if (s == "Hz") return Component::Hz;
    if (s == "Ex") return Component::Ex;
    if (s == "Ey") return Component::Ey;
    throw ParameterError("unknown field component '" + s + "'");
}

double SourceSpec::width_s() const { return 1.0 / (phys::pi * df_hz); }

double SourceSpec::value(double t) const {
    const double w = width_s();
    const double t0 = 3.0 * w;
    const double carrier = std::sin(2.0 * phys::pi * f0_hz * (t - t0));
    if (kind == SourceKind::ContinuousWave) {
        const double env = t < t0 ? std::exp(-((t - t0) / w) * ((t - t0) / w)) : 1.0;
        return amplitude * env * carrier;
    }
    if (t > 2.0 * t0) return 0.0;
    const double u = (t - t0) / w;
    return amplitude * std::exp(-u * u) * carrier;
}

long SourceSpec::off_step(double dt) const {
    if (kind == SourceKind::ContinuousWave) return -1;
    return static_cast<long>(std::ceil(6.0 * width_s() / dt));
}

double FieldMap::e2(int i, int j) const {
    const auto k = static_cast<std::size_t>(j) * nx + i;
    return std::norm(ex[k]) + std::norm(ey[k]);
}

Simulation::Simulation(const geometry::DielectricMap& map, const SimOptions& opts)
    : opts_(opts), nx_(map.nx), ny_(map.ny) {
    if (nx_ < 2 || ny_ < 2 || map.eps.size() != static_cast<std::size_t>(nx_) * ny_)
        throw ParameterError("fdtd: dielectric map is empty or inconsistent");
    if (!(opts.courant > 0.0)) throw ParameterError("fdtd: Courant factor must be > 0");
    if (!(opts.courant <= 1.0) && !opts.allow_unstable)
        throw ParameterError("fdtd: Courant factor S <= 1 violated");
    if (opts.threads < 1) throw ParameterError("fdtd: threads >= 1 violated");
    const int pml = opts.boundary == Boundary::Pml ? opts.pml_cells : 0;
    if (opts.boundary == Boundary::Pml) {
        if (pml < 8) throw ParameterError("fdtd: pml_cells >= 8 violated");
        if (2 * pml >= nx_ || 2 * pml >= ny_) throw ParameterError("fdtd: PML thicker than the grid");
    }
    for (double e : map.eps)
        if (!(e >= 1.0) || !std::isfinite(e)) throw ParameterError("fdtd: permittivity must be finite and >= 1");

    dx_nm_ = map.dx_nm;
    origin_x_nm_ = map.origin_x_nm;
    origin_y_nm_ = map.origin_y_nm;
    dx_ = map.dx_nm * 1e-9;
    dt_ = opts.courant * dx_ / (phys::c * std::sqrt(2.0));
    eps_ = map.eps;

    hzx_.assign(static_cast<std::size_t>(nx_) * ny_, 0.0);
    hzy_.assign(hzx_.size(), 0.0);
    ex_.assign(static_cast<std::size_t>(nx_) * (ny_ + 1), 0.0);
    ey_.assign(static_cast<std::size_t>(nx_ + 1) * ny_, 0.0);

    // Edge permittivity: mean of the two adjacent cells (one at the boundary).
    inv_eps_ex_.assign(ex_.size(), 1.0);
    for (int j = 0; j <= ny_; ++j)
        for (int i = 0; i < nx_; ++i) {
            const double lo = map.at(i, std::max(j - 1, 0));
            const double hi = map.at(i, std::min(j, ny_ - 1));
            inv_eps_ex_[idx_ex(i, j)] = 2.0 / (lo + hi);
        }
    inv_eps_ey_.assign(ey_.size(), 1.0);
    for (int j = 0; j < ny_; ++j)
        for (int i = 0; i <= nx_; ++i) {
            const double lo = map.at(std::max(i - 1, 0), j);
            const double hi = map.at(std::min(i, nx_ - 1), j);
            inv_eps_ey_[idx_ey(i, j)] = 2.0 / (lo + hi);
        }

    // Graded conductivity s(u) = s_max (depth/P)^m in rate units (1/s);
    // u is the position in cell units with edges on integers.
    const double rate_dt = phys::c * dt_ / dx_;
    double s_max = 0.0;
    if (pml > 0)
        s_max = -(opts.pml_order + 1.0) * phys::c * std::log(opts.pml_reflection) / (2.0 * pml * dx_);
    auto profile = [&](double u, int n) {
        if (pml == 0) return 0.0;
        const double depth = std::max({static_cast<double>(pml) - u, u - (n - pml), 0.0}) / pml;
        return s_max * std::pow(depth, opts.pml_order);
    };
    pml_profile_x_ = pml_profile_y_ = 0;
    auto build = [&](int n, std::vector<double>& ha, std::vector<double>& hb, std::vector<double>& ea,
                     std::vector<double>& eb, std::size_t& prof) {
        ha.resize(n);
        hb.resize(n);
        ea.resize(n + 1);
        eb.resize(n + 1);
        for (int k = 0; k < n; ++k) {
            const double s = profile(k + 0.5, n);
            if (s > 0.0) ++prof;
            pml_coeffs(s, dt_, rate_dt, ha[k], hb[k]);
        }
        for (int k = 0; k <= n; ++k) pml_coeffs(profile(k, n), dt_, rate_dt, ea[k], eb[k]);
    };
    build(nx_, ha_x_, hb_x_, ea_x_, eb_x_, pml_profile_x_);
    build(ny_, ha_y_, hb_y_, ea_y_, eb_y_, pml_profile_y_);
}

void Simulation::add_source(const SourceSpec& src) {
    if (src.i < 0 || src.j < 0 || src.i >= nx_ || src.j >= ny_)
        throw ParameterError("fdtd: source outside grid");
    if (!(src.f0_hz > 0.0) || !(src.df_hz > 0.0)) throw ParameterError("fdtd: source needs f0 > 0 and df > 0");
    sources_.push_back(src);
}

std::size_t Simulation::add_probe(int i, int j, Component c) {
    if (i < 0 || j < 0 || i >= nx_ || j >= ny_) throw ParameterError("fdtd: probe outside grid");
    Probe p;
    p.i = i;
    p.j = j;
    p.component = c;
    p.series.dt_s = dt_;
    probes_.push_back(std::move(p));
    return probes_.size() - 1;
}

void Simulation::enable_dft(double omega, long start_step) {
    if (!(omega > 0.0)) throw ParameterError("fdtd: DFT frequency must be > 0");
    dft_on_ = true;
    dft_omega_ = omega;
    dft_start_ = start_step;
    dft_steps_ = 0;
    dft_ex_.assign(ex_.size(), {});
    dft_ey_.assign(ey_.size(), {});
    dft_hz_.assign(hzx_.size(), {});
}

void Simulation::reserve_steps(long n) {
    for (auto& p : probes_) p.series.samples.reserve(p.series.samples.size() + static_cast<std::size_t>(n));
}

template <class F>
void Simulation::for_bands(int rows, F&& f) {
    const int threads = std::min(opts_.threads, rows);
    if (threads <= 1) {
        f(0, rows);
        return;
    }
    // Fixed band boundaries: every row is updated by exactly one band and
    // no reductions happen here, so results do not depend on thread count.
#pragma omp parallel for schedule(static, 1) num_threads(threads)
    for (int b = 0; b < threads; ++b) {
        const int j0 = static_cast<int>(static_cast<long>(rows) * b / threads);
        const int j1 = static_cast<int>(static_cast<long>(rows) * (b + 1) / threads);
        f(j0, j1);
    }
}

void Simulation::update_h_rows(int j0, int j1) {
    const int nx = nx_;
    const int nxe = nx_ + 1;
    const double* __restrict ex = ex_.data();
    const double* __restrict ey = ey_.data();
    double* __restrict hzx = hzx_.data();
    double* __restrict hzy = hzy_.data();
    const double* __restrict hax = ha_x_.data();
    const double* __restrict hbx = hb_x_.data();
    for (int j = j0; j < j1; ++j) {
        const double hay = ha_y_[j];
        const double hby = hb_y_[j];
        const double* ey_row = ey + static_cast<std::size_t>(j) * nxe;
        const double* ex_lo = ex + static_cast<std::size_t>(j) * nx;
        const double* ex_hi = ex_lo + nx;
        double* hx_row = hzx + static_cast<std::size_t>(j) * nx;
        double* hy_row = hzy + static_cast<std::size_t>(j) * nx;
        for (int i = 0; i < nx; ++i) {
            hx_row[i] = hax[i] * hx_row[i] - hbx[i] * (ey_row[i + 1] - ey_row[i]);
            hy_row[i] = hay * hy_row[i] + hby * (ex_hi[i] - ex_lo[i]);
        }
    }
}

void Simulation::update_e_rows(int j0, int j1) {
    const int nx = nx_;
    const int nxe = nx_ + 1;
    const double* __restrict hzx = hzx_.data();
    const double* __restrict hzy = hzy_.data();
    double* __restrict ex = ex_.data();
    double* __restrict ey = ey_.data();
    const double* __restrict iex = inv_eps_ex_.data();
    const double* __restrict iey = inv_eps_ey_.data();
    const double* __restrict eax = ea_x_.data();
    const double* __restrict ebx = eb_x_.data();
    // Rows j index Hz rows; each band owns Ex rows j (j >= 1) and Ey rows j.
    for (int j = j0; j < j1; ++j) {
        const double* hx = hzx + static_cast<std::size_t>(j) * nx;
        const double* hy = hzy + static_cast<std::size_t>(j) * nx;
        if (j >= 1) {
            const double eay = ea_y_[j];
            const double eby = eb_y_[j];
            const double* hx_lo = hx - nx;
            const double* hy_lo = hy - nx;
            double* ex_row = ex + static_cast<std::size_t>(j) * nx;
            const double* ie = iex + static_cast<std::size_t>(j) * nx;
            for (int i = 0; i < nx; ++i)
                ex_row[i] = eay * ex_row[i] + eby * ie[i] * ((hx[i] + hy[i]) - (hx_lo[i] + hy_lo[i]));
        }
        double* ey_row = ey + static_cast<std::size_t>(j) * nxe;
        const double* ie = iey + static_cast<std::size_t>(j) * nxe;
        for (int i = 1; i < nx; ++i)
            ey_row[i] = eax[i] * ey_row[i] - ebx[i] * ie[i] * ((hx[i] + hy[i]) - (hx[i - 1] + hy[i - 1]));
    }
}

void Simulation::dft_rows(int j0, int j1, double ch, double sh, double ce, double se) {
    const std::complex<double> ph_h(ch * dt_, sh * dt_), ph_e(ce * dt_, se * dt_);
    for (int j = j0; j < j1; ++j) {
        for (int i = 0; i < nx_; ++i) {
            const auto k = idx_h(i, j);
            dft_hz_[k] += (hzx_[k] + hzy_[k]) * ph_h;
            dft_ex_[idx_ex(i, j)] += ex_[idx_ex(i, j)] * ph_e;
        }
        for (int i = 0; i <= nx_; ++i) dft_ey_[idx_ey(i, j)] += ey_[idx_ey(i, j)] * ph_e;
    }
    if (j1 == ny_)
        for (int i = 0; i < nx_; ++i) dft_ex_[idx_ex(i, ny_)] += ex_[idx_ex(i, ny_)] * ph_e;
}

void Simulation::inject_sources() {
    const double th = (t_ + 0.5) * dt_;
    for (const auto& s : sources_) {
        if (s.component != Component::Hz) continue;
        const double v = s.value(th);
        const auto k = idx_h(s.i, s.j);
        hzx_[k] += 0.5 * v;
        hzy_[k] += 0.5 * v;
    }
}

void Simulation::step() {
    for_bands(ny_, [this](int j0, int j1) { update_h_rows(j0, j1); });
    inject_sources();
    for_bands(ny_, [this](int j0, int j1) { update_e_rows(j0, j1); });

    const double te = (t_ + 1) * dt_;
    for (const auto& s : sources_) {
        if (s.component == Component::Ex) {
            // E sources live on the lower edge of their cell; the PEC walls stay clamped.
            if (s.j >= 1) ex_[idx_ex(s.i, s.j)] += s.value(te);
        } else if (s.component == Component::Ey) {
            if (s.i >= 1) ey_[idx_ey(s.i, s.j)] += s.value(te);
        }
    }

    for (auto& p : probes_) {
        double v = 0.0;
        switch (p.component) {
            case Component::Hz: v = hz(p.i, p.j); break;
            case Component::Ex: v = ex_[idx_ex(p.i, p.j)]; break;
            case Component::Ey: v = ey_[idx_ey(p.i, p.j)]; break;
        }
        p.series.samples.push_back(v);
    }

    if (dft_on_ && t_ >= dft_start_) {
        const double wh = dft_omega_ * (t_ + 0.5) * dt_;
        const double we = dft_omega_ * te;
        const double ch = std::cos(wh), sh = std::sin(wh), ce = std::cos(we), se = std::sin(we);
        for_bands(ny_, [&](int j0, int j1) { dft_rows(j0, j1, ch, sh, ce, se); });
        ++dft_steps_;
    }

    ++t_;
    if (t_ % kFiniteCheckEvery == 0) check_finite();
}

void Simulation::check_finite() const {
    auto bad = [](const std::vector<double>& v) {
        for (double x : v)
            if (!(std::abs(x) <= kBlowup)) return true;
        return false;
    };
    if (bad(hzx_) || bad(hzy_) || bad(ex_) || bad(ey_)) {
        std::ostringstream os;
        os << "fdtd: field blow-up detected at step " << t_ << " (Courant factor " << opts_.courant << ")";
        throw InstabilityError(os.str(), t_);
    }
}

void Simulation::run(long n_steps) {
    reserve_steps(n_steps);
    for (long n = 0; n < n_steps; ++n) step();
    check_finite();
}

double Simulation::energy() const {
    double e_sum = 0.0;
    for (int j = 0; j <= ny_; ++j)
        for (int i = 0; i < nx_; ++i) {
            const double v = ex_[idx_ex(i, j)];
            e_sum += v * v / inv_eps_ex_[idx_ex(i, j)];
        }
    for (int j = 0; j < ny_; ++j)
        for (int i = 0; i <= nx_; ++i) {
            const double v = ey_[idx_ey(i, j)];
            e_sum += v * v / inv_eps_ey_[idx_ey(i, j)];
        }
    double h_sum = 0.0;
    for (int j = 0; j < ny_; ++j)
        for (int i = 0; i < nx_; ++i) {
            const auto k = idx_h(i, j);
            const double dey = ey_[idx_ey(i + 1, j)] - ey_[idx_ey(i, j)];
            const double dex = ex_[idx_ex(i, j + 1)] - ex_[idx_ex(i, j)];
            const double nx_part = ha_x_[i] * hzx_[k] - hb_x_[i] * dey;
            const double ny_part = ha_y_[j] * hzy_[k] + hb_y_[j] * dex;
            h_sum += (hzx_[k] + hzy_[k]) * (nx_part + ny_part);
        }
    return 0.5 * phys::eps0 * (e_sum + h_sum) * dx_ * dx_;
}

double Simulation::energy_in(const Box& b) const {
    double sum = 0.0;
    for (int j = b.j0; j < b.j1; ++j)
        for (int i = b.i0; i < b.i1; ++i) {
            const double h = hz(i, j);
            const double ex_c = 0.5 * (ex_[idx_ex(i, j)] + ex_[idx_ex(i, j + 1)]);
            const double ey_c = 0.5 * (ey_[idx_ey(i, j)] + ey_[idx_ey(i + 1, j)]);
            sum += eps_[idx_h(i, j)] * (ex_c * ex_c + ey_c * ey_c) + h * h;
        }
    return 0.5 * phys::eps0 * sum * dx_ * dx_;
}

double Simulation::flux(const Segment& seg) const {
    if (!dft_on_) throw ParameterError("fdtd: flux requires an enabled DFT monitor");
    if (seg.from < 0 || seg.to < seg.from) throw ParameterError("fdtd: bad flux segment range");
    double sum = 0.0;
    if (seg.axis == Segment::Axis::Vertical) {
        if (seg.index < 1 || seg.index > nx_ - 1 || seg.to > ny_)
            throw ParameterError("fdtd: flux segment outside grid");
        for (int j = seg.from; j < seg.to; ++j) {
            const auto e = dft_ey_[idx_ey(seg.index, j)];
            const auto h = 0.5 * (dft_hz_[idx_h(seg.index - 1, j)] + dft_hz_[idx_h(seg.index, j)]);
            sum += 0.5 * std::real(e * std::conj(h));
        }
    } else {
        if (seg.index < 1 || seg.index > ny_ - 1 || seg.to > nx_)
            throw ParameterError("fdtd: flux segment outside grid");
        for (int i = seg.from; i < seg.to; ++i) {
            const auto e = dft_ex_[idx_ex(i, seg.index)];
            const auto h = 0.5 * (dft_hz_[idx_h(i, seg.index - 1)] + dft_hz_[idx_h(i, seg.index)]);
            sum -= 0.5 * std::real(e * std::conj(h));
        }
    }
    return sum * dx_ / phys::eta0;
}

double Simulation::box_flux(const Box& b) const {
    using A = Segment::Axis;
    return flux({A::Vertical, b.i1, b.j0, b.j1}) - flux({A::Vertical, b.i0, b.j0, b.j1}) +
           flux({A::Horizontal, b.j1, b.i0, b.i1}) - flux({A::Horizontal, b.j0, b.i0, b.i1});
}

double Simulation::dft_energy(const Box& b) const {
    if (!dft_on_) throw ParameterError("fdtd: stored energy requires an enabled DFT monitor");
    if (b.i0 < 0 || b.j0 < 0 || b.i1 > nx_ || b.j1 > ny_ || b.i0 >= b.i1 || b.j0 >= b.j1)
        throw ParameterError("fdtd: energy box outside grid");
    double sum = 0.0;
    for (int j = b.j0; j < b.j1; ++j)
        for (int i = b.i0; i < b.i1; ++i) {
            // Each cell owns its lower Ex edge, left Ey edge and its Hz node.
            sum += std::norm(dft_ex_[idx_ex(i, j)]) / inv_eps_ex_[idx_ex(i, j)];
            sum += std::norm(dft_ey_[idx_ey(i, j)]) / inv_eps_ey_[idx_ey(i, j)];
            sum += std::norm(dft_hz_[idx_h(i, j)]);
        }
    return 0.25 * phys::eps0 * sum * dx_ * dx_;
}

FieldMap Simulation::field_map() const {
    if (!dft_on_) throw ParameterError("fdtd: field map requires an enabled DFT monitor");
    FieldMap m;
    m.nx = nx_;
    m.ny = ny_;
    m.dx_nm = dx_nm_;
    m.origin_x_nm = origin_x_nm_;
    m.origin_y_nm = origin_y_nm_;
    m.omega_rad_s = dft_omega_;
    m.steps = dft_steps_;
    const auto n = static_cast<std::size_t>(nx_) * ny_;
    m.ex.resize(n);
    m.ey.resize(n);
    m.hz.resize(n);
    for (int j = 0; j < ny_; ++j)
        for (int i = 0; i < nx_; ++i) {
            const auto k = idx_h(i, j);
            m.ex[k] = 0.5 * (dft_ex_[idx_ex(i, j)] + dft_ex_[idx_ex(i, j + 1)]);
            m.ey[k] = 0.5 * (dft_ey_[idx_ey(i, j)] + dft_ey_[idx_ey(i + 1, j)]);
            m.hz[k] = dft_hz_[k];
        }
    return m;
}

void Simulation::reset() {
    std::fill(hzx_.begin(), hzx_.end(), 0.0);
    std::fill(hzy_.begin(), hzy_.end(), 0.0);
    std::fill(ex_.begin(), ex_.end(), 0.0);
    std::fill(ey_.begin(), ey_.end(), 0.0);
    t_ = 0;
    sources_.clear();
    probes_.clear();
    dft_on_ = false;
    dft_ex_.clear();
    dft_ey_.clear();
    dft_hz_.clear();
}

void write_fldmap(const std::filesystem::path& path, const FieldMap& m) {
    nlohmann::json header = {{"nx", m.nx},
                             {"ny", m.ny},
                             {"dx_nm", m.dx_nm},
                             {"origin_nm", {m.origin_x_nm, m.origin_y_nm}},
                             {"omega_rad_s", m.omega_rad_s},
                             {"steps", m.steps},
                             {"normalization", m.normalization},
                             {"components", {"Ex", "Ey", "Hz"}},
                             {"layout", "complex re,im interleaved; one plane per component"},
                             {"run", m.run}};
    std::vector<double> payload;
    payload.reserve(6 * m.ex.size());
    for (const auto* plane : {&m.ex, &m.ey, &m.hz})
        for (const auto& z : *plane) {
            payload.push_back(z.real());
            payload.push_back(z.imag());
        }
    io::write_binary_doc(path, header, payload);
}

FieldMap read_fldmap(const std::filesystem::path& path) {
    auto doc = io::read_binary_doc(path);
    FieldMap m;
    try {
        m.nx = doc.header.at("nx").get<int>();
        m.ny = doc.header.at("ny").get<int>();
        m.dx_nm = doc.header.at("dx_nm").get<double>();
        m.origin_x_nm = doc.header.at("origin_nm").at(0).get<double>();
        m.origin_y_nm = doc.header.at("origin_nm").at(1).get<double>();
        m.omega_rad_s = doc.header.at("omega_rad_s").get<double>();
        m.steps = doc.header.value("steps", 0L);
        m.normalization = doc.header.value("normalization", m.normalization);
        if (doc.header.contains("run")) m.run = doc.header["run"];
    } catch (const nlohmann::json::exception& ex) {
        throw IoError("fldmap header incomplete: " + std::string(ex.what()));
    }
    const auto n = static_cast<std::size_t>(m.nx) * m.ny;
    if (m.nx <= 0 || m.ny <= 0 || doc.payload.size() != 6 * n)
        throw IoError("fldmap payload size does not match 3 complex planes of nx*ny");
    for (auto* plane : {&m.ex, &m.ey, &m.hz}) plane->resize(n);
    std::size_t p = 0;
    for (auto* plane : {&m.ex, &m.ey, &m.hz})
        for (auto& z : *plane) {
            z = {doc.payload[p], doc.payload[p + 1]};
            p += 2;
        }
    return m;
}

}  // namespace qdcav::fdtd
