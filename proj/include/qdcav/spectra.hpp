#pragma once

// Photoluminescence spectra: synthesis from the coupled-mode model,
// multi-Lorentzian fitting, branch tracking and anticrossing fits.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "qdcav/cqed.hpp"

namespace qdcav::spectra {

inline constexpr std::size_t kMinSpectrumPoints = 16;

struct Spectrum {
    std::vector<double> energies_eV;  // strictly ascending
    std::vector<double> intensities;
    std::optional<double> temperature_K;

    void validate() const;
    double span() const { return energies_eV.back() - energies_eV.front(); }
};

using SpectrumSeries = std::vector<Spectrum>;

/// b + A (G/2)^2 / ((E - E0)^2 + (G/2)^2): peak b + A at E0, FWHM G.
double lorentzian(double E, double A, double E0, double G, double b);

enum class AmplitudeModel { Photonic, Equal };

struct SynthesisOptions {
    AmplitudeModel amplitude_model = AmplitudeModel::Photonic;
    double noise_rms = 0.0;          // absolute, in units of a pure-cavity peak height
    double resolution_fwhm_eV = 50e-6; // Gaussian instrument response; 0 disables
    double step_eV = 4e-6;
    double margin_eV = 0.0;          // 0: 8 x the widest linewidth
    std::uint64_t seed = 0;
};

/// One spectrum per temperature; Ex and Ec of `sys` are replaced by the
/// tuning model at each T.
SpectrumSeries synthesize(const cqed::CoupledSystem& sys, const cqed::TuningModel& tuning,
                          const std::vector<double>& temperatures_K, const SynthesisOptions& opts);

struct Peak {
    double A = 0.0;
    double E0_eV = 0.0;
    double fwhm_eV = 0.0;
    double sigma_A = 0.0;
    double sigma_E0 = 0.0;
    double sigma_fwhm = 0.0;
};

struct PeakFit {
    std::vector<Peak> peaks;        // sorted by center energy
    double baseline = 0.0;
    double sigma_baseline = 0.0;
    Eigen::MatrixXd covariance;     // order: (A, E0, G) per peak, then baseline
    double residual_norm = 0.0;     // |model - data|
    std::vector<double> cost_history;
    int iterations = 0;
    bool converged = false;
};

struct PeakInit {
    double A = 0.0;
    double E0_eV = 0.0;
    double fwhm_eV = 0.0;
};

struct FitOptions {
    /// Lower bound on FWHM; 0 selects one sampling step.
    double min_fwhm_eV = 0.0;
    /// Known Gaussian instrument FWHM convolved into the model (uniform grids only); 0 fits bare Lorentzians.
    double resolution_fwhm_eV = 0.0;
    int max_iterations = 200;
};

PeakFit fit_peaks(const Spectrum& spec, int n_peaks, const std::optional<std::vector<PeakInit>>& init = std::nullopt,
                  const FitOptions& opts = {});

struct QEstimate {
    double Q = 0.0;
    double sigma = 0.0;
};

/// Q = E0 / FWHM with first-order uncertainty from the fit covariance.
QEstimate extract_q(const PeakFit& fit, std::size_t peak_index);

struct BranchPoint {
    double T_K = 0.0;
    std::optional<double> lower_eV, upper_eV;
    std::optional<double> sigma_lower, sigma_upper;
    bool fit_ok = true;
    std::string note;
};

/// Fits every spectrum with two peaks (one as fallback) and assigns the
/// peaks to lower/upper branches. Two peaks are assigned by energy order;
/// a single peak goes to the branch whose extrapolated position is closer.
std::vector<BranchPoint> track_peaks(const SpectrumSeries& series, const FitOptions& opts = {});

/// Branch assignment from pre-fitted peaks at each temperature.
std::vector<BranchPoint> assign_branches(const std::vector<double>& temperatures,
                                         const std::vector<std::vector<Peak>>& peaks);

struct FreeParams {
    bool hg = true;
    bool Ex0 = true;
    bool alpha = false;
    bool Ec0 = true;
    bool drift = true;
};

struct AnticrossFit {
    double hg_eV = 0.0;
    double sigma_hg_eV = 0.0;
    cqed::TuningModel tuning;
    double Gx_eV = 0.0, Gc_eV = 0.0;
    double zero_detuning_T_K = 0.0;
    double rabi_splitting_eV = 0.0;
    double rms_residual_eV = 0.0;   // over the points kept in the fit
    std::size_t rejected_points = 0;  // branch positions dropped as outliers
    std::vector<double> temperatures_K;
    std::vector<double> predicted_lower_eV, predicted_upper_eV;
    bool converged = false;
    int iterations = 0;
};

/// Least-squares fit of the coupled-mode peak positions to tracked branches.
/// Points carrying a positive sigma are weighted by 1/sigma; points beyond
/// five robust standard deviations are dropped and the fit repeated. beta_K
/// of `start` is held fixed, and alpha too unless freed.
AnticrossFit fit_anticrossing(const std::vector<BranchPoint>& branches, double Gx_eV, double Gc_eV,
                              const FreeParams& free = {}, const std::optional<cqed::TuningModel>& start = std::nullopt);

// IO ------------------------------------------------------------------------

Spectrum read_spectrum_csv(const std::filesystem::path& path);
void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& s);
/// Directory of CSVs plus manifest.json [{"file", "temperature_K"}].
SpectrumSeries read_series(const std::filesystem::path& dir);
void write_series(const std::filesystem::path& dir, const SpectrumSeries& series);

nlohmann::json to_json(const PeakFit& fit);
nlohmann::json to_json(const AnticrossFit& fit);
nlohmann::json to_json(const std::vector<BranchPoint>& branches);

}  // namespace qdcav::spectra
