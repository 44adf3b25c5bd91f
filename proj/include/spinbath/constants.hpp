#pragma once

// Physical constants and unit conventions.
//
// Frequencies crossing the library boundary (files, CLI, LatticeSite fields) are
// ordinary frequencies in kHz. The forward model works in angular units, rad/ms,
// which is numerically 2*pi times the kHz value. Times are in ms, distances in
// angstrom and fields in gauss.
//
// Gyromagnetic ratios are taken positive for both the NV electron and 13C. The
// point-dipole coupling is then P (3 cos^2 theta - 1) with P > 0; tables built
// with the opposite convention only flip the sign of a_par, which the coherence
// model sees through (a_par + omega_L).

#include <numbers>

namespace spinbath::constants {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// mu_0 / (4 pi), T m / A.
inline constexpr double mu0_over_4pi = 1.0e-7;
/// Reduced Planck constant, J s.
inline constexpr double hbar = 1.054571817e-34;
/// NV electron gyromagnetic ratio magnitude, rad / (s T).
inline constexpr double gamma_electron = 1.76085963023e11;
/// 13C gyromagnetic ratio, rad / (s T).
inline constexpr double gamma_c13 = 6.728284e7;

/// 13C gyromagnetic ratio as an ordinary frequency per gauss, kHz/G.
inline constexpr double gamma_c13_khz_per_gauss = gamma_c13 / two_pi / 1.0e4 / 1.0e3;

/// Point-dipole prefactor mu0/(4pi) gamma_e gamma_n hbar expressed as kHz * angstrom^3.
inline constexpr double dipole_prefactor_khz_a3 =
    mu0_over_4pi * gamma_electron * gamma_c13 * hbar / two_pi / 1.0e-30 / 1.0e3;

/// Natural 13C abundance.
inline constexpr double c13_natural_abundance = 0.011;

/// Diamond cubic lattice constant, angstrom.
inline constexpr double diamond_lattice_constant = 3.567;

/// Radius inside which tabulated ab initio couplings are used.
inline constexpr double dft_radius = 30.0;
/// Default site-table cutoff radius.
inline constexpr double default_cutoff = 40.0;

/// ordinary kHz -> rad/ms
constexpr double to_angular(double khz) { return two_pi * khz; }
/// rad/ms -> ordinary kHz
constexpr double to_khz(double angular) { return angular / two_pi; }

} // namespace spinbath::constants
