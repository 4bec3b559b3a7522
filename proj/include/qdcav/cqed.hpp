#pragma once

// Single quantum dot exciton coupled to one cavity mode.
//
// Energies and linewidths are in eV. Linewidths are FWHM of the intensity
// spectrum; in the non-Hermitian 2x2 model they enter as -i G/2 on the
// diagonal, which makes the zero-detuning eigenvalue splitting coincide with
// the loss-corrected Rabi formula.

#include <complex>
#include <optional>
#include <utility>
#include <vector>

namespace qdcav::cqed {

struct CoupledSystem {
    double Ex_eV = 1.28;
    double Ec_eV = 1.28;
    double Gx_eV = 78e-6;
    double Gc_eV = 160e-6;
    double hg_eV = 0.0;
    double f = 10.7;
    double eps_r = 3.46 * 3.46;

    void validate() const;
    double detuning() const { return Ex_eV - Ec_eV; }
};

/// Varshni exciton shift plus a linear cavity drift.
struct TuningModel {
    double Ex0_eV = 1.28;
    double alpha_eV_per_K = 5.405e-4;
    double beta_K = 204.0;
    double Ec0_eV = 1.28;
    double drift_eV_per_K = 0.0;

    void validate() const;
};

/// hbar g in eV for oscillator strength f, mode volume V (m^3) and relative
/// permittivity eps_r: g^2 = e^2 f / (4 eps0 eps_r m V).
double coupling_constant(double f, double V_m3, double eps_r);

/// Mode volume in m^3 from a value expressed in units of (lambda0/n)^3.
double mode_volume_m3(double V_lambda_n3, double E0_eV, double n);

/// 2 sqrt(hg^2 - ((Gc - Gx)/4)^2), or 0 when the radicand is not positive.
double rabi_splitting(const CoupledSystem& sys);

struct Eigenmodes {
    std::complex<double> lambda_plus, lambda_minus;  // ordered by real part, plus = upper
    double E_plus = 0.0, E_minus = 0.0;              // peak positions
    double G_plus = 0.0, G_minus = 0.0;              // FWHM
    double photonic_plus = 0.0, photonic_minus = 0.0;
    double excitonic_plus = 0.0, excitonic_minus = 0.0;
    /// Re(lambda_plus - lambda_minus) evaluated relative to the mean energy,
    /// free of the cancellation in E_plus - E_minus.
    double splitting = 0.0;
};

Eigenmodes eigenmodes(const CoupledSystem& sys);

/// Real parts (lower, upper) of the two eigenvalues for energies given
/// relative to any common reference; no validation, for use inside fits.
std::pair<double, double> branch_energies(double Ex, double Ec, double Gx, double Gc, double hg);

struct StrongCouplingVerdict {
    bool strong = false;
    double margin_eV = 0.0;
};

/// Strong coupling iff dE > Gc/2 (strict).
StrongCouplingVerdict strong_coupling_test(double dE_eV, double Gc_eV);

inline constexpr double kSaturationFraction = 0.99;

struct SplittingCurve {
    std::vector<double> q;
    std::vector<double> dE_eV;
    std::optional<double> onset_q;       // first grid Q with dE > 0
    std::optional<double> saturation_q;  // first grid Q with dE >= 0.99 * 2 hg
    double onset_q_closed_form = 0.0;    // E0 / (4 hg + Gx)
    double saturation_q_closed_form = 0.0;
};

SplittingCurve splitting_vs_q(double E0_eV, double hg_eV, double Gx_eV, const std::vector<double>& q_grid);

/// Log-spaced Q grid, inclusive of both ends.
std::vector<double> log_q_grid(double q_min, double q_max, int points);

double exciton_energy(double T_K, const TuningModel& model);
double cavity_energy(double T_K, const TuningModel& model);

}  // namespace qdcav::cqed
