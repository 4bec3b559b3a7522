#include "qdcav/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qdcav/binfile.hpp"
#include "qdcav/error.hpp"

namespace qdcav::geometry {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

[[noreturn]] void fail(const std::string& what) { throw ParameterError(what); }

bool has_mirror_image(const std::vector<Hole>& holes, const Hole& h, double tol) {
    return std::any_of(holes.begin(), holes.end(), [&](const Hole& o) {
        return std::abs(o.x - h.x) <= tol && std::abs(o.y - h.y) <= tol &&
               std::abs(o.r - h.r) <= tol;
    });
}

}  // namespace

void LatticeSpec::validate() const {
    if (!(a_nm > 0.0)) fail("lattice: a > 0 violated");
    if (!(r_nm > 0.0 && r_nm < a_nm / 2.0)) fail("lattice: 0 < r < a/2 violated");
    if (n_rows < 1) fail("lattice: n_rows >= 1 violated");
    if (n_cols < 1) fail("lattice: n_cols >= 1 violated");
    if (!(w_factor > 0.5 && w_factor < 1.5)) fail("lattice: 0.5 < w_factor < 1.5 violated");
}

double LatticeSpec::waveguide_width_nm() const { return w_factor * kSqrt3 * a_nm; }
double LatticeSpec::row_pitch_nm() const { return kSqrt3 * a_nm / 2.0; }

void CavitySpec::validate(double a_nm) const {
    if (tier_columns < 1) fail("cavity: tier_columns >= 1 violated");
    for (std::size_t t = 0; t < shift_tiers_nm.size(); ++t) {
        const double s = shift_tiers_nm[t];
        if (!(s >= 0.0)) fail("cavity: shifts >= 0 violated");
        if (!(s < a_nm / 10.0)) fail("cavity: each shift < a/10 violated");
        if (t > 0) {
            const double prev = shift_tiers_nm[t - 1];
            // Equal tiers are only meaningful when both are zero.
            if (s > prev || (s == prev && s != 0.0))
                fail("cavity: shifts strictly decreasing violated");
        }
    }
}

bool HoleSet::is_mirror_symmetric(double tol_nm) const {
    for (const auto& h : holes) {
        if (!has_mirror_image(holes, {-h.x, h.y, h.r}, tol_nm)) return false;
        if (!has_mirror_image(holes, {h.x, -h.y, h.r}, tol_nm)) return false;
    }
    return true;
}

bool HoleSet::is_non_overlapping() const {
    for (std::size_t i = 0; i < holes.size(); ++i)
        for (std::size_t k = i + 1; k < holes.size(); ++k) {
            const double d = std::hypot(holes[i].x - holes[k].x, holes[i].y - holes[k].y);
            if (!(d > holes[i].r + holes[k].r)) return false;
        }
    return true;
}

HoleSet build_lattice(const LatticeSpec& spec) {
    spec.validate();
    HoleSet out;
    const double half_w = spec.waveguide_width_nm() / 2.0;
    for (int m = 0; m < spec.n_rows; ++m) {
        const double y = half_w + m * spec.row_pitch_nm();
        const int count = (m % 2 == 0) ? spec.n_cols : spec.n_cols + 1;
        const double center = (count - 1) / 2.0;
        for (double sign : {1.0, -1.0})
            for (int k = 0; k < count; ++k)
                out.holes.push_back({(k - center) * spec.a_nm, sign * y, spec.r_nm});
    }
    return out;
}

HoleSet apply_cavity_shifts(const HoleSet& holes, const CavitySpec& cav) {
    if (holes.holes.empty()) fail("cavity: empty hole set");
    double inner_y = std::numeric_limits<double>::infinity();
    for (const auto& h : holes.holes) inner_y = std::min(inner_y, std::abs(h.y));
    constexpr double tol = 1e-6;

    std::vector<double> columns;
    for (const auto& h : holes.holes)
        if (std::abs(std::abs(h.y) - inner_y) < tol && std::abs(h.x) > tol) columns.push_back(std::abs(h.x));
    std::sort(columns.begin(), columns.end());
    columns.erase(std::unique(columns.begin(), columns.end(),
                              [](double a, double b) { return std::abs(a - b) < tol; }),
                  columns.end());

    // Lattice constant recovered from the innermost-row pitch.
    double a_nm = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < columns.size(); ++k) a_nm = std::min(a_nm, columns[k] - columns[k - 1]);
    cav.validate(a_nm);

    const std::size_t needed = cav.shift_tiers_nm.size() * static_cast<std::size_t>(cav.tier_columns);
    if (needed > columns.size()) {
        std::ostringstream os;
        os << "cavity: " << needed << " shifted columns per side requested but the innermost row has only "
           << columns.size();
        fail(os.str());
    }

    HoleSet out = holes;
    for (auto& h : out.holes) {
        if (std::abs(std::abs(h.y) - inner_y) >= tol) continue;
        const double ax = std::abs(h.x);
        const auto it = std::find_if(columns.begin(), columns.end(),
                                     [&](double c) { return std::abs(c - ax) < tol; });
        if (it == columns.end()) continue;
        const auto col = static_cast<std::size_t>(it - columns.begin());
        const std::size_t tier = col / static_cast<std::size_t>(cav.tier_columns);
        if (tier >= cav.shift_tiers_nm.size()) continue;
        const double mag = std::abs(h.y) + cav.shift_tiers_nm[tier];
        h.y = h.y > 0 ? mag : -mag;
    }
    return out;
}

ShiftAudit audit_shifts(const HoleSet& before, const HoleSet& after, double tol_nm) {
    if (before.size() != after.size()) fail("audit: hole sets differ in size");
    ShiftAudit audit;
    for (std::size_t i = 0; i < before.size(); ++i) {
        const double d = std::hypot(after.holes[i].x - before.holes[i].x,
                                    after.holes[i].y - before.holes[i].y);
        if (d > tol_nm) {
            ++audit.displaced;
            audit.total_displacement_nm += d;
        }
    }
    return audit;
}

DielectricMap DielectricMap::uniform(int nx, int ny, double dx_nm, double eps_value) {
    DielectricMap m;
    m.nx = nx;
    m.ny = ny;
    m.dx_nm = dx_nm;
    m.origin_x_nm = -(nx - 1) / 2.0 * dx_nm;
    m.origin_y_nm = -(ny - 1) / 2.0 * dx_nm;
    m.eps_background = eps_value;
    m.eps.assign(static_cast<std::size_t>(nx) * ny, eps_value);
    return m;
}

DielectricMap rasterize(const HoleSet& holes, double dx_nm, double eps_background, double pad_nm,
                        double lattice_a_nm) {
    if (!(dx_nm > 0.0)) throw ResolutionError("rasterize: dx must be positive");
    if (!(dx_nm <= lattice_a_nm / 10.0))
        throw ResolutionError("rasterize: dx <= a/10 violated (dx too coarse)");
    if (!(pad_nm >= 2.0 * lattice_a_nm)) fail("rasterize: pad >= 2a violated");
    if (!(eps_background >= 1.0)) fail("rasterize: eps_background >= 1 violated");

    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    if (!holes.holes.empty()) {
        xmin = ymin = std::numeric_limits<double>::infinity();
        xmax = ymax = -std::numeric_limits<double>::infinity();
        for (const auto& h : holes.holes) {
            xmin = std::min(xmin, h.x - h.r);
            xmax = std::max(xmax, h.x + h.r);
            ymin = std::min(ymin, h.y - h.r);
            ymax = std::max(ymax, h.y + h.r);
        }
    }
    xmin -= pad_nm;
    xmax += pad_nm;
    ymin -= pad_nm;
    ymax += pad_nm;

    DielectricMap map;
    map.nx = static_cast<int>(std::ceil((xmax - xmin) / dx_nm - 1e-9));
    map.ny = static_cast<int>(std::ceil((ymax - ymin) / dx_nm - 1e-9));
    map.dx_nm = dx_nm;
    map.eps_background = eps_background;
    const double cx = 0.5 * (xmin + xmax);
    const double cy = 0.5 * (ymin + ymax);
    const double half_i = (map.nx - 1) / 2.0;
    const double half_j = (map.ny - 1) / 2.0;
    map.origin_x_nm = cx - half_i * dx_nm;
    map.origin_y_nm = cy - half_j * dx_nm;

    // Subsample coordinates are built as (integer offset + fraction) * dx so
    // that mirrored cells see exactly negated coordinates.
    std::vector<int> inside(static_cast<std::size_t>(map.nx) * map.ny, 0);
    constexpr int s = kSubsample;
    for (const auto& h : holes.holes) {
        const int i0 = std::max(0, static_cast<int>(std::floor((h.x - h.r - cx) / dx_nm + half_i)) - 1);
        const int i1 = std::min(map.nx - 1, static_cast<int>(std::ceil((h.x + h.r - cx) / dx_nm + half_i)) + 1);
        const int j0 = std::max(0, static_cast<int>(std::floor((h.y - h.r - cy) / dx_nm + half_j)) - 1);
        const int j1 = std::min(map.ny - 1, static_cast<int>(std::ceil((h.y + h.r - cy) / dx_nm + half_j)) + 1);
        const double r2 = h.r * h.r;
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) {
                int count = 0;
                for (int sj = 0; sj < s; ++sj) {
                    const double y = cy + ((j - half_j) + (sj - (s - 1) / 2.0) / s) * dx_nm;
                    const double dy = y - h.y;
                    for (int si = 0; si < s; ++si) {
                        const double x = cx + ((i - half_i) + (si - (s - 1) / 2.0) / s) * dx_nm;
                        const double ddx = x - h.x;
                        if (ddx * ddx + dy * dy < r2) ++count;
                    }
                }
                inside[static_cast<std::size_t>(j) * map.nx + i] += count;
            }
    }

    map.eps.resize(inside.size());
    for (std::size_t k = 0; k < inside.size(); ++k) {
        const double frac = std::min(inside[k], s * s) / static_cast<double>(s * s);
        map.eps[k] = eps_background + (1.0 - eps_background) * frac;
    }
    return map;
}

double slab_dispersion_residual(double n_eff, double n_core, double n_clad, double thickness_nm,
                                double lambda0_nm) {
    const double k0 = 2.0 * 3.14159265358979323846 / lambda0_nm;
    const double kappa = k0 * std::sqrt(std::max(0.0, n_core * n_core - n_eff * n_eff));
    const double gamma = k0 * std::sqrt(std::max(0.0, n_eff * n_eff - n_clad * n_clad));
    const double half = kappa * thickness_nm / 2.0;
    return kappa * std::sin(half) - gamma * std::cos(half);
}

double effective_index(double n_core, double n_clad, double thickness_nm, double lambda0_nm) {
    if (!(n_clad >= 1.0)) fail("effective_index: n_clad >= 1 violated");
    if (!(n_core > n_clad)) fail("effective_index: n_core > n_clad violated");
    if (!(thickness_nm > 0.0 && lambda0_nm > 0.0)) fail("effective_index: thickness, lambda0 > 0 violated");

    // Restrict to the fundamental branch: kappa d/2 in (0, pi/2].
    const double k0 = 2.0 * 3.14159265358979323846 / lambda0_nm;
    const double kappa_cap = 3.14159265358979323846 / thickness_nm;
    const double n_low = std::sqrt(std::max(n_clad * n_clad, n_core * n_core - (kappa_cap / k0) * (kappa_cap / k0)));
    double lo = n_low, hi = n_core;
    auto res = [&](double n) { return slab_dispersion_residual(n, n_core, n_clad, thickness_nm, lambda0_nm); };
    const double r_lo = res(lo);
    if (r_lo < 0.0) {
        // Only possible at cutoff when the whole interval collapses onto n_clad.
        if (hi - lo < 1e-9) return lo;
        throw InternalError("effective_index: no guided fundamental mode bracketed");
    }
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if (res(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

void write_epsmap(const std::filesystem::path& path, const DielectricMap& map) {
    nlohmann::json header = {{"nx", map.nx},
                             {"ny", map.ny},
                             {"dx_nm", map.dx_nm},
                             {"origin_nm", {map.origin_x_nm, map.origin_y_nm}},
                             {"eps_background", map.eps_background}};
    io::write_binary_doc(path, header, map.eps);
}

DielectricMap read_epsmap(const std::filesystem::path& path) {
    auto doc = io::read_binary_doc(path);
    DielectricMap map;
    try {
        map.nx = doc.header.at("nx").get<int>();
        map.ny = doc.header.at("ny").get<int>();
        map.dx_nm = doc.header.at("dx_nm").get<double>();
        map.origin_x_nm = doc.header.at("origin_nm").at(0).get<double>();
        map.origin_y_nm = doc.header.at("origin_nm").at(1).get<double>();
        map.eps_background = doc.header.at("eps_background").get<double>();
    } catch (const nlohmann::json::exception& ex) {
        throw IoError("epsmap header incomplete: " + std::string(ex.what()));
    }
    if (map.nx <= 0 || map.ny <= 0 ||
        doc.payload.size() != static_cast<std::size_t>(map.nx) * map.ny)
        throw IoError("epsmap payload size does not match nx*ny");
    map.eps = std::move(doc.payload);
    return map;
}

}  // namespace qdcav::geometry
