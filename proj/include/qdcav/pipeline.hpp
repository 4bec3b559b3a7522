#pragma once

// End-to-end steps behind the command-line subcommands. Each step takes
// in-memory inputs and returns in-memory results; file handling lives in
// the CLI.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qdcav/config.hpp"
#include "qdcav/cqed.hpp"
#include "qdcav/fdtd.hpp"
#include "qdcav/geometry.hpp"
#include "qdcav/modal.hpp"
#include "qdcav/spectra.hpp"

namespace qdcav::pipeline {

struct DesignResult {
    geometry::HoleSet holes;
    geometry::DielectricMap map;
    geometry::ShiftAudit audit;
    nlohmann::json summary;
};

DesignResult design(const config::RunConfig& cfg);

struct SimulationResult {
    std::vector<modal::ResonancePeak> scan_peaks;
    double scan_E0_eV = 0.0;
    fdtd::TimeSeries probe;
    fdtd::Component probe_component = fdtd::Component::Ey;
    long source_off_step = 0;
    fdtd::FieldMap field;  // run metadata in field.run
    double stored_energy_J_per_m = 0.0;
    double leaked_power_W_per_m = 0.0;
    nlohmann::json summary;
};

/// Broadband scan to locate the dominant resonance, then a narrowband run
/// centered on it with a DFT monitor and a flux box.
SimulationResult simulate(const config::RunConfig& cfg, const geometry::DielectricMap& map);

struct AnalysisInput {
    fdtd::TimeSeries probe;
    long t_min_steps = 0;                        // first sample used
    const fdtd::FieldMap* field = nullptr;       // optional
    const geometry::DielectricMap* eps = nullptr;  // required with field
};

struct AnalysisResult {
    modal::ModeCharacterization mode;
    std::vector<modal::ResonancePeak> peaks;
    modal::DecayFit decay;
    std::optional<modal::ModeVolume> volume;
    nlohmann::json report;
};

AnalysisResult analyze(const config::RunConfig& cfg, const AnalysisInput& in);

/// Sample index at which analysis should start for a simulated probe.
long analysis_start(const fdtd::FieldMap& field, const config::RunConfig& cfg);

struct Prediction {
    double hg_eV = 0.0;
    double Gc_eV = 0.0;
    double dE_eV = 0.0;
    cqed::StrongCouplingVerdict verdict;
    cqed::SplittingCurve curve;
    nlohmann::json report;
};

/// Coupling, splitting and splitting-vs-Q curve. When `mode` is given its
/// E0, Q and volume replace the corresponding cqed settings.
Prediction predict(const config::RunConfig& cfg, const std::optional<modal::ModeCharacterization>& mode);

// File helpers shared by the CLI and tests.
void write_probe_csv(const std::filesystem::path& path, const fdtd::TimeSeries& series, fdtd::Component c);
fdtd::TimeSeries read_probe_csv(const std::filesystem::path& path);

struct QmapRow {
    double a_nm = 0.0, r_over_a = 0.0, E0_eV = 0.0, Q = 0.0;
};

struct QmapResult {
    std::vector<QmapRow> rows;           // sorted by (a, r/a)
    std::vector<std::string> warnings;
};

/// Collects analyze reports (*.json carrying a_nm, r_over_a, E0_eV, Q) from a
/// directory. Files are visited in name order; a later duplicate (a, r/a)
/// replaces an earlier one with a warning.
QmapResult collect_qmap(const std::filesystem::path& dir);

}  // namespace qdcav::pipeline
