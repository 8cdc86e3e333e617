#pragma once

#include <string>
#include <vector>

#include "iontherm/types.hpp"

namespace iontherm {

/// Sweep grids and per-experiment knobs, all file-overridable.
struct ExperimentTunables {
    /// White-noise PSD levels for the heating study, N^2/Hz. The default
    /// set contains a pair at 10.89x (a 3.3x drive-voltage ratio).
    std::vector<double> heating_psd_levels{0.0, 4.59e-46, 4.99851e-45};

    /// Red detunings for the sweep study, ordinary MHz, strictly increasing.
    std::vector<double> detuning_grid_mhz{-48, -42, -36, -30, -26, -22, -19,
                                          -16, -14, -12, -10, -8, -6, -5};

    /// Spectral scan of the cooling transition (dynamics stay live). The
    /// scan stops just past resonance: once the blue side heats the ion
    /// out of the cooling cycle there is no line left to measure.
    double scan_start_mhz = -120.0;
    double scan_stop_mhz = 2.0;
    int scan_points = 62;
    double scan_dwell_s = 8.0e-3;

    /// Trap-axis rotation sweep, degrees, strictly increasing. The default
    /// beam sits at +45 degrees, so decoupling happens at a 45-degree trap
    /// rotation; the grid brackets it densely.
    std::vector<double> rotation_grid_deg{25,    33,   39, 42, 43.5, 44.25, 45,
                                          45.75, 46.5, 48, 51, 57,   65};
    double rotation_aspect_ratio = 2.25;  ///< nu_y / nu_x used by the rotation study
    double rotation_duration_s = 0.15;    ///< per-point simulated time for the rotation study

    double photons_per_image = 2.0e4;
    bool dump_trajectories = false;
};

struct RunConfig {
    Scenario scenario;
    ExperimentTunables experiment;
};

/// Violations of the experiment-level invariants (grid monotonicity etc).
std::vector<std::string> experiment_violations(const ExperimentTunables& e);

/// Defaults validated and ready to run.
RunConfig default_run_config();

/// Parse a flat dotted-key config file ("trap.nu_x_hz = 1.0e6", '#'
/// comments). Unknown keys are errors; every problem found is reported in
/// one ConfigError. The result is fully validated.
RunConfig load_run_config(const std::string& path);

/// Same parser over an in-memory string (used by tests and selftest).
RunConfig parse_run_config(const std::string& text);

/// All recognized keys with their default values, one "key = value" line
/// each; doubles as the reference config.
std::string config_reference();

} // namespace iontherm
