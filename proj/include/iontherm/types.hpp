#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "iontherm/constants.hpp"
#include "iontherm/errors.hpp"
#include "iontherm/units.hpp"

namespace iontherm {

/// Physical identity of the trapped ion.
struct IonSpecies {
    double mass_kg = 0.0;
    double wavelength_m = 0.0;       ///< cooling transition wavelength
    AngularFreq natural_linewidth;   ///< Gamma, angular (rad/s)
    std::string label;

    double mass_amu() const { return mass_kg / constants::atomic_mass_unit; }
    /// Photon wavenumber k = 2 pi / lambda, rad/m.
    double wavenumber() const { return constants::two_pi / wavelength_m; }
    /// Single-photon recoil momentum hbar k, kg m/s.
    double recoil_momentum() const { return constants::hbar * wavenumber(); }
};

/// 174Yb+ on the 369.5 nm S1/2 - P1/2 transition. The linewidth default
/// (Gamma/2pi = 19.6 MHz) is an external constant, overridable in config.
IonSpecies yb174();

/// Harmonic pseudopotential parameters. Secular frequencies are ordinary
/// (Hz); the z axis is carried for completeness but the planar dynamics
/// ignore it.
struct TrapConfig {
    OrdinaryFreq nu_x{1.0e6};
    OrdinaryFreq nu_y{1.0e6};
    OrdinaryFreq nu_z{1.0e6};
    double axis_rotation_deg = 0.0;  ///< principal axes vs. the image frame, about the optical axis
    OrdinaryFreq rf_drive{20.0e6};   ///< Omega_RF / 2pi

    double omega_x() const { return nu_x.angular().rad_per_s; }
    double omega_y() const { return nu_y.angular().rad_per_s; }
};

/// Cooling beam parameters. Detuning is angular and negative when red of
/// resonance; the beam direction is a unit vector in the image plane.
struct LaserConfig {
    AngularFreq detuning = AngularFreq::from_mhz(-15.0);
    double saturation = 0.5;
    OrdinaryFreq linewidth{0.5e6};   ///< Delta_L, ordinary Hz
    Vec2 direction{1.0, 0.0};        ///< image-plane (lab) frame
    /// Constant extra homogeneous width of the cooling response (angular),
    /// standing in for micromotion sidebands and Zeeman structure. Widens
    /// the response Lorentzian; the peak scattering rate is unchanged.
    AngularFreq micromotion_broadening{0.0};

    /// Response linewidth seen by the light: natural plus the broadening
    /// knob, rad/s.
    double response_linewidth(const IonSpecies& ion) const {
        return ion.natural_linewidth.rad_per_s + micromotion_broadening.rad_per_s;
    }
};

/// Imaging system model. All lengths are object-plane (at the ion);
/// magnification is applied once, when a physical chip pitch is converted.
struct ImagingConfig {
    double numerical_aperture = 0.64;
    double magnification = 596.0;
    double psf_radius_m = 300e-9;        ///< w_i, 1/e^2 radius; bracketed unknown, not clamped to the diffraction limit
    double pixel_pitch_m = 13.0e-6 / 596.0;  ///< object plane = physical pitch / M
    double quantum_efficiency = 0.8;
    double read_noise_counts = 3.0;      ///< RMS
    double baseline_offset_counts = 20.0;
    int grid_width = 224;
    int grid_height = 224;
    double min_observed_spot_m = 373e-9; ///< smallest spot ever recorded; upper resolution bound
};

/// White-noise force drive applied through the compensation electrodes.
struct NoiseDriveConfig {
    double force_psd = 0.0;   ///< S_F, N^2/Hz, two-sided
    Vec2 coupling{std::numbers::sqrt2 / 2.0, std::numbers::sqrt2 / 2.0};  ///< unit vector, lab frame
};

enum class RecoilModel {
    Diffusion,   ///< Gaussian momentum kicks with the scattering-rate diffusion coefficient
    Events,      ///< Poisson-distributed discrete photon kicks
};

/// Integrator and estimator knobs (plumbing, not physics inputs).
struct SimParams {
    double dt_s = 1.5e-8;
    double duration_s = 20.0e-3;
    double transient_fraction = 0.2;   ///< leading fraction of each trajectory dropped before averaging
    double escape_radius_m = 50e-6;
    RecoilModel recoil_model = RecoilModel::Diffusion;
    /// Per-axis second moment of the emission recoil projection. 0.5 is
    /// isotropic in the simulation plane; 1/3 is the 3D-isotropic value.
    double emission_second_moment = 0.5;
    int sample_stride = 50;            ///< steps per stored trajectory sample
    int ensemble = 8;
    /// Converged when the two halves of the averaging window agree to
    /// this relative tolerance (plus statistical allowance).
    double equilibration_tolerance = 0.25;
};

/// Everything a run needs, validated as a unit.
struct Scenario {
    IonSpecies ion;
    TrapConfig trap;
    LaserConfig laser;
    ImagingConfig imaging;
    NoiseDriveConfig noise;
    SimParams sim;
};

/// Diffraction-limited 1/e^2 radius, 0.43 lambda / NA.
/// Throws DomainError unless lambda > 0 and 0 < NA < 1.
double diffraction_limit(double wavelength_m, double numerical_aperture);

/// Every violated invariant, one "section.field: problem" string each.
/// Empty means valid.
std::vector<std::string> invariant_violations(const Scenario& s);

/// Returns the bundle unchanged if all invariants hold, else throws
/// ValidationError listing every violation. Idempotent.
const Scenario& validate_scenario(const Scenario& s);

Scenario default_scenario();

} // namespace iontherm
