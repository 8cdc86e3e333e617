#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iontherm/dynamics.hpp"
#include "iontherm/types.hpp"

namespace iontherm {

/// Synthetic CCD frame. Counts are stored as doubles: integer-valued once
/// shot/read noise is applied, real-valued expectation image otherwise.
/// Geometry is object-plane; row j sits at y = (j + 0.5 - height/2) * pitch.
struct IonImage {
    int width = 0;
    int height = 0;
    double pixel_pitch_m = 0.0;   ///< object plane
    std::vector<double> counts;   ///< row-major, width*height, all >= 0
    double expected_photons = 0.0;
    std::uint64_t seed = 0;
    bool truncated = false;       ///< < 99.9% of the spot energy landed on-chip
    bool noise_applied = true;

    double& at(int ix, int iy) { return counts[static_cast<size_t>(iy) * width + ix]; }
    double at(int ix, int iy) const { return counts[static_cast<size_t>(iy) * width + ix]; }
    double pixel_center_x(int ix) const { return (ix + 0.5 - 0.5 * width) * pixel_pitch_m; }
    double pixel_center_y(int iy) const { return (iy + 0.5 - 0.5 * height) * pixel_pitch_m; }
};

/// Observed 1/e^2 spot radius of a thermal Gaussian of deviation sigma seen
/// through a Gaussian PSF of 1/e^2 radius w_i: w = sqrt(4 sigma^2 + w_i^2).
double expected_spot_radius(double sigma_m, double psf_radius_m);

/// Forward model: rotated thermal-spot Gaussian through the PSF, pixel
/// integration by 4-point Gauss-Legendre per axis, Poisson counts plus
/// rounded Gaussian read noise (clamped at zero). `apply_noise = false`
/// returns the real-valued expectation image instead.
IonImage render_image(double sigma_x_m, double sigma_y_m, double spot_rotation_deg,
                      const ImagingConfig& imaging, double n_photons_expected, std::uint64_t seed,
                      bool apply_noise = true);

/// Image synthesized from trajectory samples: photon emission times are
/// drawn with probability proportional to the instantaneous scattering
/// rate, blurred by the PSF, and binned. `rotation_deg` maps the trap
/// frame onto the image frame. Requires >= 1000 samples.
IonImage render_from_trajectory(const std::vector<TrajectorySample>& samples, double rotation_deg,
                                const ImagingConfig& imaging, double n_photons_expected,
                                std::uint64_t seed, bool apply_noise = true);

/// 16-bit binary PGM (P5, maxval 65535, big-endian), counts rounded and
/// clamped; metadata goes to "<path>.txt".
void write_pgm16(const std::string& path, const IonImage& image);

/// Reads a PGM written by write_pgm16, pulling geometry from the sidecar.
IonImage read_pgm16(const std::string& path);

/// Plain matrix dump for plotting, one CSV row per pixel row.
void write_image_csv(const std::string& path, const IonImage& image);

} // namespace iontherm
