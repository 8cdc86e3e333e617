#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iontherm/config.hpp"
#include "iontherm/dynamics.hpp"
#include "iontherm/thermometry.hpp"

namespace iontherm {

enum class ExperimentId { HeatingLevels, DetuningSweep, AxisRotation };

struct ExperimentSpec {
    ExperimentId id = ExperimentId::HeatingLevels;
    std::string config_path;          ///< empty = built-in defaults
    std::string output_dir = ".";
    std::uint64_t seed = 1;
    int ensemble_override = 0;        ///< 0 = use config value
    Mode mode = Mode::Physical;
    std::vector<double> grid_override;   ///< optional replacement sweep grid
};

struct HeatingLevelPoint {
    int level = 0;
    double noise_psd = 0.0;
    SteadyStateTemps sim;
    std::vector<ThermometryResult> spatial;   ///< axes x, y
    double fitted_radius_m[2] = {0.0, 0.0};   ///< w_x, w_y
    double fitted_radius_err_m[2] = {0.0, 0.0};
    bool image_truncated = false;
    std::string image_path;
};

struct HeatingLevelsResult {
    std::vector<HeatingLevelPoint> levels;
    std::string results_csv;
};

struct SweepPoint {
    double delta_mhz = 0.0;
    SteadyStateTemps sim;
    double t_beam_sim_k = 0.0;   ///< velocity-variance temperature along the beam
    std::vector<ThermometryResult> spatial;
    bool image_truncated = false;
};

struct SweepLevel {
    int level = 0;
    double noise_psd = 0.0;
    std::vector<SweepPoint> points;
    SpectrumScan scan;
    double gamma_t_hz = 0.0;
    double gamma_t_err_hz = 0.0;
    ThermometryResult spectroscopic;
    double t_beam_sim_min_k = 0.0;   ///< smallest simulated beam temperature over the grid
};

struct DetuningSweepResult {
    std::vector<SweepLevel> levels;
    std::string spatial_csv;
    std::string spectroscopic_csv;
};

struct RotationPoint {
    double theta_deg = 0.0;
    SteadyStateTemps sim;                     ///< axis 0 = trap x, axis 1 = trap y
    std::vector<ThermometryResult> spatial;   ///< may be truncated
    int weak_axis = 1;                        ///< axis with the smaller cooling projection
    bool image_truncated = false;
    std::string image_path;                   ///< only written for selected angles
};

struct AxisRotationResult {
    std::vector<RotationPoint> points;
    std::string results_csv;
};

/// Controlled-heating study: one steady state, image, and spatial
/// thermometry per configured noise PSD level. The level list must contain
/// a 10.89x PSD pair (a 3.3x drive-voltage ratio).
HeatingLevelsResult run_heating_levels(const ExperimentSpec& spec, const RunConfig& cfg);

/// Detuning dependence of both thermometry methods, per heating level:
/// spatial temperatures across the red-detuning grid plus one live-dynamics
/// spectral sweep fitted for a spectroscopic band. The lower-bound
/// Lorentzian width is the smallest fitted linewidth across levels.
DetuningSweepResult run_detuning_sweep(const ExperimentSpec& spec, const RunConfig& cfg);

/// Anisotropic-cooling study over the trap-axis rotation grid, with
/// rotation-enabled image fits. The trap aspect ratio nu_y/nu_x is forced
/// to rotation.aspect_ratio for this study.
AxisRotationResult run_axis_rotation(const ExperimentSpec& spec, const RunConfig& cfg);

/// Scan CSV, columns detuning_mhz,rate_hz,dwell_s.
void write_scan_csv(const std::string& path, const SpectrumScan& scan);
SpectrumScan read_scan_csv(const std::string& path);

} // namespace iontherm
