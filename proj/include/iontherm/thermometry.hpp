#pragma once

#include <string>
#include <vector>

#include "iontherm/fitters.hpp"
#include "iontherm/imaging.hpp"
#include "iontherm/types.hpp"

namespace iontherm {

/// Physical mode uses equipartition-consistent prefactors; PaperLiteral
/// reproduces the as-published formula variants bit for bit (spatial
/// temperatures exactly 1/4 of physical, Doppler temperatures exactly
/// 4 ln 2 times physical).
enum class Mode { Physical, PaperLiteral };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct ThermometryFlags {
    bool clamped = false;        ///< deconvolution clamped to zero at the nominal resolution
    bool clamped_lo = false;     ///< lower systematic bound clamped
    bool clamped_hi = false;     ///< upper systematic bound clamped
    bool near_boundary = false;  ///< statistical error unreliable near the clamp boundary
    bool truncated = false;      ///< image overfilled the chip; axis not recoverable
    bool unconverged = false;    ///< underlying steady state had not equilibrated

    std::string to_csv_token() const;
};

struct ThermometryResult {
    double temperature_k = 0.0;
    double stat_err_k = 0.0;   ///< one sigma
    double sys_lo_k = 0.0;     ///< systematic band, sys_lo <= T <= sys_hi where defined
    double sys_hi_k = 0.0;
    std::string axis;          ///< "x", "y", or "beam"
    std::string method;        ///< "spatial" or "spectroscopic"
    Mode mode = Mode::Physical;
    ThermometryFlags flags;
};

/// Imaging-resolution bracket used for the systematic band.
struct ResolutionBounds {
    double w_lo_m = 0.0;   ///< diffraction bound
    double w_hi_m = 0.0;   ///< smallest observed spot

    static ResolutionBounds from_imaging(const ImagingConfig& imaging, double wavelength_m);
};

struct Deconvolved {
    double variance_m2 = 0.0;
    bool clamped = false;
};

/// Quadrature deconvolution <x^2> = (w_obs^2 - w_i^2) / 4, clamped at zero
/// (clamping is reported, not an error).
Deconvolved variance_deconvolve(double w_obs_m, double w_i_m);

/// Spatial temperature from the position variance. Physical:
/// T = m (2 pi nu)^2 <x^2> / k_B. PaperLiteral: T = m pi^2 nu^2 <x^2> / k_B.
double temperature_from_variance(double variance_m2, OrdinaryFreq nu, const IonSpecies& ion, Mode mode);

/// Temperature with statistical error and systematic band from one fitted
/// spot radius: deconvolution at the nominal resolution for the central
/// value, at the bracket edges for the band.
ThermometryResult spatial_result_from_radius(double w_obs_m, double w_err_m, OrdinaryFreq nu,
                                             const IonSpecies& ion, const ResolutionBounds& bounds,
                                             double w_i_nominal_m, Mode mode,
                                             const std::string& axis_label = "x");

/// Full spatial pipeline: Gaussian fit, per-axis deconvolution at the
/// nominal resolution, statistical error by the delta method, systematic
/// band from the resolution bracket. Requires
/// bounds.w_lo <= w_i_nominal <= bounds.w_hi. A truncated image marks both
/// axes unrecoverable (NaN temperatures, truncated flag).
std::vector<ThermometryResult> spatial_thermometry(const IonImage& image, const TrapConfig& trap,
                                                   const IonSpecies& ion, const ResolutionBounds& bounds,
                                                   double w_i_nominal_m, Mode mode,
                                                   const ImageFitOptions& fit_opts = {});

/// Olivero-Longbothum Voigt FWHM,
/// Gamma_V = 0.5346 Gamma_L + sqrt(0.2166 Gamma_L^2 + Gamma_G^2).
double voigt_fwhm(double gamma_g_hz, double gamma_l_hz);

struct VoigtDecomposition {
    double gamma_g_hz = 0.0;
    bool clamped = false;
};

/// Algebraic inverse of voigt_fwhm at fixed Gamma_L; clamped to zero when
/// Gamma_T is at or below the pure-Lorentzian width.
VoigtDecomposition voigt_decompose(double gamma_t_hz, double gamma_l_hz);

/// Doppler temperature from the Gaussian FWHM component. Physical:
/// T = m lambda^2 Gamma_G^2 / (8 ln2 k_B). PaperLiteral:
/// T = (m / 2 k_B) (Gamma_G lambda)^2.
double doppler_temperature(double gamma_g_hz, const IonSpecies& ion, Mode mode);

/// Spectroscopic pipeline: cutoff-Lorentzian fit, Voigt decomposition at
/// the two Gamma_L assumptions (natural linewidth for the upper bound,
/// smallest observed linewidth for the lower), temperature reported as the
/// band midpoint. Requires gamma_l_natural <= gamma_l_min_observed.
ThermometryResult spectroscopic_thermometry(const SpectrumScan& scan, const IonSpecies& ion,
                                            double gamma_l_natural_hz, double gamma_l_min_observed_hz,
                                            Mode mode, const SpectrumFitOptions& fit_opts = {});

/// CSV rows: method,axis,mode,T_K,stat_err_K,sys_lo_K,sys_hi_K,flags.
void write_thermometry_csv(const std::string& path, const std::vector<ThermometryResult>& rows);
std::string thermometry_csv_header();
std::string thermometry_csv_row(const ThermometryResult& r);

} // namespace iontherm
