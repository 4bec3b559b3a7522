#pragma once

// Resonance energy, quality factor and mode volume from FDTD outputs.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qdcav/fdtd.hpp"
#include "qdcav/geometry.hpp"

namespace qdcav::modal {

struct ResonancePeak {
    double E_eV = 0.0;
    double f_hz = 0.0;
    double amplitude = 0.0;  // sqrt of the interpolated periodogram peak
};

inline constexpr int kMinScanSamples = 2048;
inline constexpr int kPadFactor = 8;

/// Peaks of the Hann-windowed, zero-padded periodogram of samples[t_min..].
/// A peak must exceed 10x the median periodogram level and 1e-3 of the
/// strongest peak (which rejects window sidelobes). Sorted by amplitude,
/// strongest first.
std::vector<ResonancePeak> resonance_scan(const fdtd::TimeSeries& series, long t_min);

inline constexpr double kQCap = 1e9;

struct DecayFit {
    double Q = 0.0;
    double r2 = 0.0;
    bool lower_bound = false;  // slope indistinguishable from zero; Q = kQCap
    double slope_per_s = 0.0;  // d ln(envelope^2) / dt
    std::size_t windows = 0;
};

/// Q = omega0 tau / 2 from a straight-line fit of ln(envelope^2) against
/// time, the envelope being the RMS over one optical period.
/// Throws MultimodeError when the envelope rebounds (beating) and
/// NumericError when the fit r^2 falls below `min_r2`.
DecayFit q_from_decay(const fdtd::TimeSeries& series, double E0_eV, long t_min, double min_r2 = 0.99);

/// Q = omega0 U / P.
double q_from_flux(double stored_energy, double leaked_power, double E0_eV);

struct ModeVolume {
    double V2d_nm2 = 0.0;
    double V_nm3 = 0.0;
    double V_um3 = 0.0;
    double V_lambda_n3 = 0.0;
    double lambda0_nm = 0.0;
    int peak_i = 0;
    int peak_j = 0;
    double peak_x_nm = 0.0;
    double peak_y_nm = 0.0;
    std::optional<std::string> warning;
};

/// Peak-normalized (Purcell) mode volume: sum(eps |E|^2) dx^2 / max(eps |E|^2),
/// extruded by `height_eff_nm`. A maximum within `edge_cells` of the grid
/// edge sets a confinement warning.
ModeVolume mode_volume(const fdtd::FieldMap& field, const geometry::DielectricMap& eps, double height_eff_nm,
                       double E0_eV, double n, int edge_cells = 1);

struct ModeCharacterization {
    double E0_eV = 0.0;
    double Q = 0.0;
    std::string q_method = "decay";
    bool q_lower_bound = false;
    double q_fit_r2 = 0.0;
    double V_um3 = 0.0;        // 0 when no field map was analyzed (serialized as null)
    double V_lambda_n3 = 0.0;
    double height_eff_nm = 180.0;
    double n_index = 3.46;
    std::optional<double> q_flux;
    std::optional<std::string> warning;
};

nlohmann::json to_json(const ModeCharacterization& m);
ModeCharacterization mode_from_json(const nlohmann::json& j);

}  // namespace qdcav::modal
