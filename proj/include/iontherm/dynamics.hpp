#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "iontherm/types.hpp"

namespace iontherm {

struct MotionState {
    Vec2 position;   ///< m, trap principal frame
    Vec2 velocity;   ///< m/s
    double time = 0.0;
};

struct TrajectorySample {
    double time = 0.0;
    Vec2 position;
    Vec2 velocity;
    double scatter_rate = 0.0;   ///< photons/s at this instant
};

struct TrajectoryRecord {
    std::vector<TrajectorySample> samples;
    double dt = 0.0;
    bool escaped = false;
    double escape_time = 0.0;
};

/// Fluorescence sample: laser offset from nominal resonance (ordinary Hz),
/// mean scattered-photon rate, and dwell time.
struct SpectrumPoint {
    double detuning_hz = 0.0;
    double rate_hz = 0.0;
    double dwell_s = 0.0;
};

struct SpectrumScan {
    std::vector<SpectrumPoint> points;
};

/// Semiclassical two-level scattering rate
///   R = (Gamma/2) s / (1 + s + (2 (delta - k v) / Gamma)^2),
/// photons/s, with v the velocity component along the beam.
double scattering_rate(double velocity_along_beam, const LaserConfig& laser, const IonSpecies& ion);

/// 1D Doppler steady state
///   T = (hbar Gamma / 4 k_B) (1 + s + (2 delta/Gamma)^2) / (2 |delta| / Gamma).
/// Throws DomainError unless detuning < 0 (no steady state otherwise).
double analytic_doppler_temperature(AngularFreq detuning, double saturation, const IonSpecies& ion);

/// Langevin heating rate per axis of the coupling vector,
///   dT_a/dt = S_F c_a^2 / (2 m k_B),  K/s.
std::array<double, 2> heating_rate_from_noise(const NoiseDriveConfig& noise, const IonSpecies& ion);

/// Velocity-damping coefficient beta = hbar k^2 dR/ddelta (kg/s), evaluated
/// at v = 0. Positive (cooling) for red detuning, negative for blue.
double friction_coefficient(const LaserConfig& laser, const IonSpecies& ion);

/// Linearized heating/cooling balance per trap axis: the low-temperature
/// steady state implied by the same force model the integrator uses.
/// Axes with no cooling projection (or blue detuning) come back +infinity.
std::array<double, 2> predicted_axis_temperatures(const TrapConfig& trap, const LaserConfig& laser,
                                                  const NoiseDriveConfig& noise, const IonSpecies& ion,
                                                  const SimParams& sim);

/// Per-axis energy damping rates beta n_a^2 / m, 1/s (negative when blue).
std::array<double, 2> axis_damping_rates(const TrapConfig& trap, const LaserConfig& laser,
                                         const IonSpecies& ion);

/// Steady-state balance with the scattering rate and friction averaged
/// over the thermal velocity distribution, solved self-consistently. More
/// faithful than the linearized predictor once the Doppler spread is a
/// noticeable fraction of the response linewidth.
std::array<double, 2> self_consistent_axis_temperatures(const TrapConfig& trap,
                                                        const LaserConfig& laser,
                                                        const NoiseDriveConfig& noise,
                                                        const IonSpecies& ion, const SimParams& sim);

/// Thermal average of scattering_rate over a Maxwell-Boltzmann velocity
/// distribution at temperature T (Gauss-Hermite quadrature). The frozen
/// lineshape oracle for spectroscopy tests.
double thermal_average_rate(AngularFreq detuning, double temperature_k, const LaserConfig& laser,
                            const IonSpecies& ion);

/// Stochastic trajectory under harmonic confinement, radiation pressure,
/// recoil, and white-noise force. Deterministic given (configs, seed).
/// Throws ConfigError if dt > 1/(50 max nu) and IntegrationError if the
/// amplitude exceeds sim.escape_radius_m.
TrajectoryRecord simulate_trajectory(const MotionState& initial, const TrapConfig& trap,
                                     const LaserConfig& laser, const NoiseDriveConfig& noise,
                                     const IonSpecies& ion, const SimParams& sim, std::uint64_t seed);

struct AxisTemperature {
    double kelvin = 0.0;                 ///< position-route estimate m w^2 <x^2> / k_B
    double kelvin_velocity_route = 0.0;  ///< m <v^2> / k_B, equipartition cross-check
    double stat_err = 0.0;               ///< one sigma over ensemble members
    bool converged = false;
};

struct SteadyStateTemps {
    std::array<AxisTemperature, 2> axis;
    bool any_escaped = false;
    double mean_scatter_rate = 0.0;
};

struct EnsembleOptions {
    bool collect_samples = false;   ///< pool post-transient samples from all members
};

struct EnsembleResult {
    SteadyStateTemps temps;
    std::vector<TrajectorySample> samples;
};

/// Ensemble steady state with per-axis convergence flags. An axis is
/// unconverged when the two halves of the averaging window disagree beyond
/// tolerance (still heating) or a member escaped; its temperature is then a
/// lower bound, not an equilibrium value.
EnsembleResult steady_state_anisotropic(const TrapConfig& trap, const LaserConfig& laser,
                                        const NoiseDriveConfig& noise, const IonSpecies& ion,
                                        const SimParams& sim, std::uint64_t seed,
                                        const EnsembleOptions& opts = {});

/// Fluorescence scan with the cooling dynamics live: the laser steps
/// through `detunings_hz` (ordinary Hz, ascending), the motional state
/// carries over between points, and each sample is the dwell-averaged
/// scattering rate. An ion driven out of the trap on the blue side stays
/// lost; later points record zero fluorescence.
SpectrumScan dynamic_spectrum_scan(const TrapConfig& trap, const LaserConfig& laser_template,
                                   const NoiseDriveConfig& noise, const IonSpecies& ion,
                                   const SimParams& sim, const std::vector<double>& detunings_hz,
                                   double dwell_s, std::uint64_t seed);

/// Frozen-temperature scan: the physical Voigt-like lineshape of an ion
/// held at fixed T, multiplied by the instrumental blue-side cutoff.
SpectrumScan frozen_spectrum_scan(double temperature_k, const LaserConfig& laser, const IonSpecies& ion,
                                  const std::vector<double>& detunings_hz, double dwell_s,
                                  double cutoff_width_hz, double amplitude_scale = 1.0,
                                  double background_rate = 0.0);

/// Trajectory dump, columns time_s,x_m,y_m,vx_ms,vy_ms.
void write_trajectory_csv(const std::string& path, const TrajectoryRecord& record);

/// Ensemble summary, columns axis,T_K,T_stat_err_K,converged.
void write_ensemble_csv(const std::string& path, const SteadyStateTemps& temps);

} // namespace iontherm
