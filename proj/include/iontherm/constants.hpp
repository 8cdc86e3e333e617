#pragma once

#include <numbers>

namespace iontherm::constants {

/// k_B, J/K (exact, 2019 SI).
inline constexpr double k_boltzmann = 1.380649e-23;

/// Reduced Planck constant, J s (exact h / 2pi).
inline constexpr double hbar = 1.054571817e-34;

/// Unified atomic mass unit, kg (CODATA 2018).
inline constexpr double atomic_mass_unit = 1.66053906660e-27;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Gaussian FWHM = fwhm_per_sigma * sigma.
inline const double fwhm_per_sigma = 2.0 * std::sqrt(2.0 * std::numbers::ln2_v<double>);

/// 1/e^2 intensity radius of a Gaussian profile in units of sigma: w = 2 sigma.
inline constexpr double e2_radius_per_sigma = 2.0;

/// Diffraction-limited 1/e^2 radius prefactor: w_min = 0.43 lambda / NA.
inline constexpr double gaussian_resolution_factor = 0.43;

} // namespace iontherm::constants
