#pragma once

// Run configuration for the command-line pipeline.
//
// One JSON document with the sections geometry, fdtd, modal, cqed, spectra
// and io. Every key is optional; unknown keys and wrongly typed values are
// rejected with an InputError. Key names carry their unit as a suffix.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qdcav/fdtd.hpp"
#include "qdcav/geometry.hpp"
#include "qdcav/spectra.hpp"

namespace qdcav::config {

struct GeometryConfig {
    geometry::LatticeSpec lattice;
    geometry::CavitySpec cavity;
    double dx_nm = 12.5;  // a/20
    double pad_nm = 500.0;
    double n_core = 3.46;
    double n_clad = 1.0;
    double slab_thickness_nm = 180.0;
    double design_wavelength_nm = 968.6;
    std::optional<double> eps_background;  // overrides the slab effective index

    double background_permittivity() const;
};

struct FdtdConfig {
    fdtd::SimOptions sim;
    fdtd::Component source_component = fdtd::Component::Ey;
    int source_offset_x_cells = 0;  // relative to the map center
    int source_offset_y_cells = 0;
    int probe_offset_x_cells = 0;
    int probe_offset_y_cells = 0;
    double scan_center_eV = 1.25;
    double scan_bandwidth_eV = 0.15;
    long scan_steps_after_source = 40000;
    double run_bandwidth_eV = 0.01;
    long run_steps_after_source = 56000;
    int flux_margin_cells = 4;  // flux box inset from the PML
};

struct ModalConfig {
    double height_eff_nm = 180.0;
    double n_index = 3.46;
    double min_r2 = 0.99;
    long settle_steps = 500;  // skipped after source switch-off before fitting
    int edge_cells = 1;
};

struct CqedConfig {
    double f = 10.7;
    double n_index = 3.46;
    double E0_eV = 1.28;
    double V_lambda_n3 = 1.3;
    double Q = 8000.0;
    double Gx_eV = 78e-6;
    std::optional<double> Gc_eV;  // default E0 / Q
    std::optional<double> hg_eV;  // default from f and V
    double q_min = 1e3;
    double q_max = 1e5;
    int q_points = 201;
};

struct SpectraConfig {
    double hg_eV = 72.94e-6;
    double Gx_eV = 78e-6;
    double Gc_eV = 160e-6;
    cqed::TuningModel tuning = default_tuning();
    double T_min_K = 5.0;
    double T_max_K = 17.0;
    double T_step_K = 0.5;
    spectra::SynthesisOptions synthesis = default_synthesis();
    int n_peaks = 1;
    spectra::FitOptions fit = default_fit();
    spectra::FreeParams free;

    std::vector<double> temperatures() const;
    /// Exciton and cavity cross at 11 K with the default Varshni parameters.
    static cqed::TuningModel default_tuning();
    static spectra::SynthesisOptions default_synthesis();
    static spectra::FitOptions default_fit();
};

struct IoConfig {
    std::filesystem::path out_dir = "out";
    std::uint64_t seed = 0;
    bool svg = true;
};

struct RunConfig {
    GeometryConfig geometry;
    FdtdConfig fdtd;
    ModalConfig modal;
    CqedConfig cqed;
    SpectraConfig spectra;
    IoConfig io;
};

RunConfig parse(const nlohmann::json& doc);
RunConfig load(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace qdcav::config
