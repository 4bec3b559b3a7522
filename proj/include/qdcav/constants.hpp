#pragma once

// CODATA 2018 exact / recommended values, SI units.

namespace qdcav::phys {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double c = 299792458.0;                 // m/s
inline constexpr double e = 1.602176634e-19;             // C
inline constexpr double h = 6.62607015e-34;              // J s
inline constexpr double hbar = 1.054571817e-34;          // J s
inline constexpr double m_e = 9.1093837015e-31;          // kg
inline constexpr double eps0 = 8.8541878128e-12;         // F/m
inline constexpr double mu0 = 1.25663706212e-6;          // N/A^2
inline constexpr double eta0 = 376.730313668;            // ohm

/// Photon energy in eV for a frequency in Hz.
constexpr double hz_to_ev(double f) { return h * f / e; }
constexpr double ev_to_hz(double E) { return E * e / h; }
/// Vacuum wavelength in nm for a photon energy in eV.
constexpr double ev_to_nm(double E) { return h * c / (E * e) * 1e9; }
constexpr double nm_to_ev(double lambda_nm) { return h * c / (lambda_nm * 1e-9 * e); }

}  // namespace qdcav::phys
