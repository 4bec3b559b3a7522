#pragma once

// Two-dimensional FDTD for the in-plane-E polarization (Ex, Ey, Hz) on a Yee
// grid with split-field PML.
//
// Grid layout for an nx x ny cell map (row-major, x fastest):
//   Hz(i, j)  cell centers          nx     x ny
//   Ex(i, j)  horizontal cell edges nx     x (ny+1)   at (i+1/2, j)
//   Ey(i, j)  vertical cell edges   (nx+1) x ny       at (i, j+1/2)
// Fields are kept in normalized units: E in V/m and Hz scaled by the vacuum
// impedance, so both carry the same magnitude for a plane wave in vacuum.
// Outer boundary is a perfect electric conductor; with PML enabled the
// outermost `pml_cells` of the map absorb.

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qdcav/geometry.hpp"

namespace qdcav::fdtd {

enum class Component { Hz, Ex, Ey };

std::string to_string(Component c);
Component component_from_string(const std::string& s);

enum class Boundary { Pml, Pec };

struct SimOptions {
    double courant = 0.5;       // S = c dt sqrt(2) / dx
    int pml_cells = 16;
    double pml_order = 3.0;
    double pml_reflection = 1e-8;
    Boundary boundary = Boundary::Pml;
    int threads = 1;            // row-band decomposition width
    bool allow_unstable = false;  // test hook: skip the Courant bound check
};

enum class SourceKind { GaussianPulse, ContinuousWave };

/// Gaussian-modulated sinusoid exp(-((t-t0)/w)^2) sin(2 pi f0 (t - t0)) with
/// w = 1/(pi df), t0 = 3w, switched off at t_off = 6w. A continuous source
/// instead ramps in with a half-Gaussian over 3w and stays on.
struct SourceSpec {
    int i = 0;
    int j = 0;
    Component component = Component::Hz;
    SourceKind kind = SourceKind::GaussianPulse;
    double f0_hz = 0.0;
    double df_hz = 0.0;
    double amplitude = 1.0;

    double width_s() const;
    double value(double t_s) const;
    long off_step(double dt_s) const;
};

struct TimeSeries {
    double dt_s = 0.0;
    std::vector<double> samples;
};

/// Complex amplitudes at one angular frequency, interpolated to cell centers.
struct FieldMap {
    int nx = 0;
    int ny = 0;
    double dx_nm = 0.0;
    double origin_x_nm = 0.0;
    double origin_y_nm = 0.0;
    double omega_rad_s = 0.0;
    long steps = 0;
    std::string normalization = "sum f(t) exp(i omega t) dt";
    std::vector<std::complex<double>> ex, ey, hz;
    /// Free-form run metadata carried in the file header under "run".
    nlohmann::json run = nlohmann::json::object();

    /// |E|^2 at cell (i, j).
    double e2(int i, int j) const;
};

void write_fldmap(const std::filesystem::path& path, const FieldMap& map);
FieldMap read_fldmap(const std::filesystem::path& path);

/// Axis-aligned line of cell edges. Vertical segments sit at x-edge `index`
/// and span cells [from, to) in y; horizontal ones sit at y-edge `index`.
/// Flux is counted along +x (vertical) or +y (horizontal).
struct Segment {
    enum class Axis { Vertical, Horizontal } axis = Axis::Vertical;
    int index = 0;
    int from = 0;
    int to = 0;
};

/// Cell-edge rectangle [i0, i1) x [j0, j1).
struct Box {
    int i0 = 0, i1 = 0, j0 = 0, j1 = 0;
};

class Simulation {
public:
    Simulation(const geometry::DielectricMap& map, const SimOptions& opts);

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    double dx_m() const { return dx_; }
    double dt_s() const { return dt_; }
    long time_step() const { return t_; }
    const SimOptions& options() const { return opts_; }

    void add_source(const SourceSpec& src);
    /// Returns the probe index.
    std::size_t add_probe(int i, int j, Component c);
    /// Running DFT at angular frequency omega starting at step `start_step`.
    void enable_dft(double omega_rad_s, long start_step = 0);

    /// Pre-sizes probe buffers for `n` further steps so step() does not allocate.
    void reserve_steps(long n);

    void step();
    void run(long n_steps);

    /// Samples recorded by a probe. Hz probes sample at (n+1/2) dt, E probes at (n+1) dt.
    const TimeSeries& probe(std::size_t k) const { return probes_[k].series; }
    Component probe_component(std::size_t k) const { return probes_[k].component; }
    std::size_t probe_count() const { return probes_.size(); }

    /// Field accessors (normalized units).
    double hz(int i, int j) const { return hzx_[idx_h(i, j)] + hzy_[idx_h(i, j)]; }
    double ex(int i, int j) const { return ex_[idx_ex(i, j)]; }
    double ey(int i, int j) const { return ey_[idx_ey(i, j)]; }
    double eps_ex(int i, int j) const { return 1.0 / inv_eps_ex_[idx_ex(i, j)]; }
    double eps_ey(int i, int j) const { return 1.0 / inv_eps_ey_[idx_ey(i, j)]; }
    double eps_cell(int i, int j) const { return eps_[idx_h(i, j)]; }

    /// Size of the per-axis PML conductivity profiles (2 * pml_cells, both ends).
    std::size_t pml_profile_size_x() const { return pml_profile_x_; }
    std::size_t pml_profile_size_y() const { return pml_profile_y_; }

    /// Discrete electromagnetic energy per unit height (J/m) with Yee time
    /// centering: sum of eps |E^n|^2 + mu H^{n-1/2} H^{n+1/2}, halved. The
    /// H^{n+1/2} factor is evaluated from the current fields without a source
    /// term, so the value is conserved exactly (up to rounding) in a closed
    /// lossless box once sources are off.
    double energy() const;
    /// Instantaneous energy inside a box (uses current fields only).
    double energy_in(const Box& box) const;

    /// Time-averaged Poynting flux (W per metre of height) through a segment,
    /// from the DFT-accumulated fields.
    double flux(const Segment& seg) const;
    /// Outward flux through the four faces of a box.
    double box_flux(const Box& box) const;
    /// Time-averaged stored energy at the DFT frequency inside a box (J/m).
    double dft_energy(const Box& box) const;
    bool dft_enabled() const { return dft_on_; }
    double dft_omega() const { return dft_omega_; }
    FieldMap field_map() const;

    /// Zeroes every field and rewinds the clock; sources, probes and DFT are cleared.
    void reset();

private:
    std::size_t idx_h(int i, int j) const { return static_cast<std::size_t>(j) * nx_ + i; }
    std::size_t idx_ex(int i, int j) const { return static_cast<std::size_t>(j) * nx_ + i; }
    std::size_t idx_ey(int i, int j) const { return static_cast<std::size_t>(j) * (nx_ + 1) + i; }

    void update_h_rows(int j0, int j1);
    void update_e_rows(int j0, int j1);
    void dft_rows(int j0, int j1, double ch, double sh, double ce, double se);
    void inject_sources();
    void check_finite() const;
    template <class F>
    void for_bands(int rows, F&& f);

    struct Probe {
        int i = 0, j = 0;
        Component component = Component::Hz;
        TimeSeries series;
    };

    SimOptions opts_;
    int nx_ = 0, ny_ = 0;
    double dx_ = 0.0;   // m
    double dt_ = 0.0;   // s
    double dx_nm_ = 0.0, origin_x_nm_ = 0.0, origin_y_nm_ = 0.0;
    long t_ = 0;

    std::vector<double> eps_;
    std::vector<double> hzx_, hzy_, ex_, ey_;
    std::vector<double> inv_eps_ex_, inv_eps_ey_;
    // Per-index update coefficients: a = exp(-s dt), b = (1-a)/(s dt) * c dt/dx.
    std::vector<double> ha_x_, hb_x_, ha_y_, hb_y_;  // at cell centers
    std::vector<double> ea_x_, eb_x_;                // at x edges (Ey)
    std::vector<double> ea_y_, eb_y_;                // at y edges (Ex)
    std::size_t pml_profile_x_ = 0, pml_profile_y_ = 0;

    std::vector<SourceSpec> sources_;
    std::vector<Probe> probes_;

    bool dft_on_ = false;
    double dft_omega_ = 0.0;
    long dft_start_ = 0;
    long dft_steps_ = 0;
    std::vector<std::complex<double>> dft_ex_, dft_ey_, dft_hz_;
};

}  // namespace qdcav::fdtd
