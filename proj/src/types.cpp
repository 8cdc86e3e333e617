#include "iontherm/types.hpp"

#include <cmath>
#include <sstream>

namespace iontherm {

IonSpecies yb174() {
    IonSpecies ion;
    ion.mass_kg = 173.9388664 * constants::atomic_mass_unit;
    ion.wavelength_m = 369.5e-9;
    ion.natural_linewidth = AngularFreq::from_mhz(19.6);
    ion.label = "Yb174";
    return ion;
}

double diffraction_limit(double wavelength_m, double numerical_aperture) {
    if (!(wavelength_m > 0.0))
        throw DomainError("diffraction_limit: wavelength must be positive");
    if (!(numerical_aperture > 0.0 && numerical_aperture < 1.0))
        throw DomainError("diffraction_limit: numerical aperture must lie in (0, 1)");
    return constants::gaussian_resolution_factor * wavelength_m / numerical_aperture;
}

namespace {

void check(std::vector<std::string>& out, bool ok, const std::string& msg) {
    if (!ok) out.push_back(msg);
}

bool finite(double v) { return std::isfinite(v); }

} // namespace

std::vector<std::string> invariant_violations(const Scenario& s) {
    std::vector<std::string> v;

    check(v, finite(s.ion.mass_kg) && s.ion.mass_kg > 0.0, "ion.mass: must be > 0");
    check(v, finite(s.ion.wavelength_m) && s.ion.wavelength_m > 0.0, "ion.wavelength: must be > 0");
    check(v, finite(s.ion.natural_linewidth.rad_per_s) && s.ion.natural_linewidth.rad_per_s > 0.0,
          "ion.natural_linewidth: must be > 0");

    const double half_drive = s.trap.rf_drive.hz / 2.0;
    for (auto [nu, name] : {std::pair{s.trap.nu_x.hz, "trap.nu_x"},
                            std::pair{s.trap.nu_y.hz, "trap.nu_y"},
                            std::pair{s.trap.nu_z.hz, "trap.nu_z"}}) {
        check(v, finite(nu) && nu > 0.0 && nu < half_drive,
              std::string(name) + ": must lie in (0, rf_drive/2)");
    }
    check(v, finite(s.trap.axis_rotation_deg) &&
              s.trap.axis_rotation_deg >= -90.0 && s.trap.axis_rotation_deg <= 90.0,
          "trap.axis_rotation: must lie in [-90, 90] degrees");
    check(v, finite(s.trap.rf_drive.hz) && s.trap.rf_drive.hz > 0.0, "trap.rf_drive: must be > 0");

    check(v, finite(s.laser.saturation) && s.laser.saturation >= 0.0, "laser.saturation: must be >= 0");
    check(v, finite(s.laser.linewidth.hz) && s.laser.linewidth.hz >= 0.0, "laser.linewidth: must be >= 0");
    check(v, finite(s.laser.detuning.rad_per_s), "laser.detuning: must be finite");
    check(v, finite(s.laser.micromotion_broadening.rad_per_s) &&
              s.laser.micromotion_broadening.rad_per_s >= 0.0,
          "laser.micromotion_broadening: must be >= 0");
    check(v, std::abs(s.laser.direction.norm() - 1.0) < 1e-9,
          "laser.direction: must be a unit vector");

    check(v, finite(s.imaging.numerical_aperture) &&
              s.imaging.numerical_aperture > 0.0 && s.imaging.numerical_aperture < 1.0,
          "imaging.numerical_aperture: must lie in (0, 1)");
    check(v, finite(s.imaging.magnification) && s.imaging.magnification > 0.0,
          "imaging.magnification: must be > 0");
    // w_i is a bound-bracketed unknown; only non-negativity is enforced.
    check(v, finite(s.imaging.psf_radius_m) && s.imaging.psf_radius_m >= 0.0,
          "imaging.psf_radius: must be >= 0");
    check(v, finite(s.imaging.pixel_pitch_m) && s.imaging.pixel_pitch_m > 0.0,
          "imaging.pixel_pitch: must be > 0");
    check(v, finite(s.imaging.quantum_efficiency) &&
              s.imaging.quantum_efficiency >= 0.0 && s.imaging.quantum_efficiency <= 1.0,
          "imaging.quantum_efficiency: must lie in [0, 1]");
    check(v, finite(s.imaging.read_noise_counts) && s.imaging.read_noise_counts >= 0.0,
          "imaging.read_noise: must be >= 0");
    check(v, s.imaging.grid_width > 0 && s.imaging.grid_height > 0,
          "imaging.grid: width and height must be > 0");
    check(v, finite(s.imaging.min_observed_spot_m) && s.imaging.min_observed_spot_m > 0.0,
          "imaging.min_observed_spot: must be > 0");

    check(v, finite(s.noise.force_psd) && s.noise.force_psd >= 0.0, "noise.force_psd: must be >= 0");
    check(v, std::abs(s.noise.coupling.norm() - 1.0) < 1e-9,
          "noise.coupling: must be a unit vector");

    check(v, finite(s.sim.dt_s) && s.sim.dt_s > 0.0, "sim.dt: must be > 0");
    check(v, finite(s.sim.duration_s) && s.sim.duration_s > 0.0, "sim.duration: must be > 0");
    check(v, s.sim.transient_fraction >= 0.0 && s.sim.transient_fraction < 1.0,
          "sim.transient_fraction: must lie in [0, 1)");
    check(v, finite(s.sim.escape_radius_m) && s.sim.escape_radius_m > 0.0,
          "sim.escape_radius: must be > 0");
    check(v, s.sim.emission_second_moment >= 0.0, "sim.emission_second_moment: must be >= 0");
    check(v, s.sim.sample_stride >= 1, "sim.sample_stride: must be >= 1");
    check(v, s.sim.ensemble >= 1, "sim.ensemble: must be >= 1");
    check(v, s.sim.equilibration_tolerance > 0.0, "sim.equilibration_tolerance: must be > 0");

    return v;
}

const Scenario& validate_scenario(const Scenario& s) {
    auto v = invariant_violations(s);
    if (!v.empty()) throw ValidationError(std::move(v));
    return s;
}

Scenario default_scenario() {
    Scenario s;
    s.ion = yb174();
    s.trap.nu_x = OrdinaryFreq::from_khz(700.0);
    s.trap.nu_y = OrdinaryFreq::from_khz(1100.0);
    s.trap.nu_z = OrdinaryFreq::from_khz(1100.0);
    s.laser.direction = Vec2{1.0, 1.0}.normalized();
    s.laser.micromotion_broadening = AngularFreq::from_mhz(8.0);
    return s;
}

} // namespace iontherm
