#pragma once

// Photonic-crystal waveguide cavity layout and its rasterization to a
// relative-permittivity grid.
//
// Frame: x runs along the waveguide axis, y across it, origin at the cavity
// center. All lengths in nm.

#include <cstddef>
#include <filesystem>
#include <vector>

namespace qdcav::geometry {

struct LatticeSpec {
    double a_nm = 250.0;
    double r_nm = 70.0;
    int n_rows = 5;       // hole rows on each side of the waveguide
    int n_cols = 16;      // holes in each innermost row
    double w_factor = 0.98;  // W = w_factor * sqrt(3) * a

    void validate() const;
    double waveguide_width_nm() const;
    double row_pitch_nm() const;
};

struct CavitySpec {
    std::vector<double> shift_tiers_nm{6.0, 4.0, 2.0};  // innermost tier first
    int tier_columns = 1;

    void validate(double a_nm) const;
};

struct Hole {
    double x = 0.0;
    double y = 0.0;
    double r = 0.0;
};

struct HoleSet {
    std::vector<Hole> holes;

    std::size_t size() const { return holes.size(); }
    /// True if the set maps onto itself under x -> -x and under y -> -y.
    bool is_mirror_symmetric(double tol_nm = 1e-9) const;
    /// True if no two holes intersect.
    bool is_non_overlapping() const;
};

/// Triangular lattice with the central row removed. Rows run along x;
/// the two innermost rows sit at y = +-W/2. Innermost rows (and every other
/// row outward) hold n_cols holes centered on x = 0; the staggered rows in
/// between hold n_cols + 1 so that every row stays mirror symmetric.
HoleSet build_lattice(const LatticeSpec& spec);

/// Pushes innermost-row holes away from the waveguide axis, tier by tier,
/// counting columns outward from x = 0 on both sides.
HoleSet apply_cavity_shifts(const HoleSet& holes, const CavitySpec& cav);

/// Hole count and total displacement between two hole sets of equal size.
struct ShiftAudit {
    std::size_t displaced = 0;
    double total_displacement_nm = 0.0;
};
ShiftAudit audit_shifts(const HoleSet& before, const HoleSet& after, double tol_nm = 1e-9);

struct DielectricMap {
    int nx = 0;
    int ny = 0;
    double dx_nm = 0.0;
    double origin_x_nm = 0.0;  // physical coordinate of the center of cell (0,0)
    double origin_y_nm = 0.0;
    double eps_background = 1.0;
    std::vector<double> eps;   // row-major, y outer, x inner

    double& at(int i, int j) { return eps[static_cast<std::size_t>(j) * nx + i]; }
    double at(int i, int j) const { return eps[static_cast<std::size_t>(j) * nx + i]; }
    double x_of(int i) const { return origin_x_nm + i * dx_nm; }
    double y_of(int j) const { return origin_y_nm + j * dx_nm; }

    /// Uniform map, useful for tests and vacuum runs.
    static DielectricMap uniform(int nx, int ny, double dx_nm, double eps_value);
};

inline constexpr int kSubsample = 4;

/// Area-weighted permittivity on a square grid of pitch dx covering the
/// hole bounding box plus `pad_nm` on every side. Holes have eps = 1.
/// `lattice_a_nm` sets the resolution floor (dx <= a/10) and minimum pad (2a).
DielectricMap rasterize(const HoleSet& holes, double dx_nm, double eps_background,
                        double pad_nm, double lattice_a_nm);

/// Fundamental TE mode index of a symmetric slab waveguide, by bisection on
/// tan(kappa d/2) = gamma/kappa.
double effective_index(double n_core, double n_clad, double thickness_nm, double lambda0_nm);

/// Residual of the even-mode slab dispersion relation in the form
/// kappa sin(kappa d/2) - gamma cos(kappa d/2); exposed for independent root scans.
double slab_dispersion_residual(double n_eff, double n_core, double n_clad,
                                double thickness_nm, double lambda0_nm);

/// `.epsmap` container: one JSON header line, then nx*ny little-endian doubles.
void write_epsmap(const std::filesystem::path& path, const DielectricMap& map);
DielectricMap read_epsmap(const std::filesystem::path& path);

}  // namespace qdcav::geometry
