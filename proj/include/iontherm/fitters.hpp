#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "iontherm/dynamics.hpp"
#include "iontherm/imaging.hpp"
#include "iontherm/types.hpp"

namespace iontherm {

struct FitResult {
    Eigen::VectorXd parameters;
    Eigen::MatrixXd covariance;     ///< residual-variance-scaled (J^T J)^-1
    double residual_norm = 0.0;     ///< sqrt(SSR) at the solution
    int iterations = 0;
    bool converged = false;
    std::vector<double> accepted_ssr;   ///< SSR after each accepted step, non-increasing

    double sigma(int i) const { return std::sqrt(std::max(0.0, covariance(i, i))); }
};

struct LeastSquaresOptions {
    int max_iterations = 500;
    double step_tolerance = 1e-8;       ///< relative step size
    double residual_tolerance = 1e-10;  ///< relative SSR decrease
    /// Starting damping is nearly Gauss-Newton; rejected steps raise it
    /// fast, so exact (linear) problems finish in one or two iterations.
    double initial_lambda = 1e-10;
};

/// Fills r(p) = model - data and, when jac != nullptr, J = dr/dp.
using ResidualFn =
    std::function<void(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac)>;

/// Levenberg-Marquardt with multiplicative damping on diag(J^T J).
/// Accepted steps never increase the residual norm; non-convergence after
/// max_iterations returns converged = false with the best parameters seen.
/// Throws RankDeficiencyError when the normal equations stay singular at
/// any damping.
FitResult least_squares(const ResidualFn& fn, int n_residuals, Eigen::VectorXd initial,
                        const LeastSquaresOptions& opts = {});

/// Rotated 2D Gaussian in 1/e^2 convention, SI form for callers.
struct Gauss2DParams {
    double amplitude = 0.0;     ///< counts at peak above offset
    double center_x_m = 0.0;
    double center_y_m = 0.0;
    double radius_x_m = 0.0;    ///< w_x, 1/e^2
    double radius_y_m = 0.0;    ///< w_y, 1/e^2
    double rotation_deg = 0.0;
    double offset = 0.0;        ///< counts
};

/// Model values A exp(-2u^2/wx^2 - 2v^2/wy^2) + B and the analytic
/// Jacobian over a width x height pixel grid. Parameter vector (pixel
/// units, rotation in radians): [A, x0, y0, wx, wy, phi, B].
void gauss2d_model(const Eigen::VectorXd& p, int width, int height, Eigen::VectorXd& value,
                   Eigen::MatrixXd* jac);

struct ImageFitOptions {
    bool rotation_free = false;     ///< phi stays fixed at 0 unless enabled
    bool poisson_weights = false;   ///< inverse-variance weighting, var = max(counts, 1)
    LeastSquaresOptions lsq;
};

struct ImageFit {
    FitResult fit;              ///< parameters in internal pixel units
    Gauss2DParams params;       ///< SI
    Gauss2DParams one_sigma;    ///< SI, statistical only
};

/// Moment-seeded Gaussian fit of an ion image. Throws FitError on a flat
/// image; non-convergence is reported through fit.converged.
ImageFit fit_ion_image(const IonImage& image, const ImageFitOptions& opts = {});

/// Cutoff-Lorentzian lineshape parameters, SI form.
struct SpectrumParams {
    double amplitude = 0.0;          ///< rate * Hz^2
    double center_hz = 0.0;          ///< nu0, offset from nominal resonance
    double fwhm_total_hz = 0.0;      ///< Gamma_T
    double laser_linewidth_hz = 0.0; ///< Delta_L
    double offset_rate = 0.0;        ///< B
};

struct SpectrumModelOptions {
    /// Normalized step (1/2 + atan(.)/pi) by default; `literal_step` swaps
    /// in the bare arctan factor for comparison runs.
    bool literal_step = false;
};

/// S(nu) = A / (dnu^2 + (Gamma_T/2)^2) * step(dnu / Delta_L) + B with
/// dnu = nu0 - nu (positive red of resonance). Parameter vector (MHz
/// units): [A, nu0, Gamma_T, Delta_L, B]; frequencies `nu_mhz` likewise.
void spectrum_model(const Eigen::VectorXd& p, const std::vector<double>& nu_mhz,
                    Eigen::VectorXd& value, Eigen::MatrixXd* jac,
                    const SpectrumModelOptions& opts = {});

/// Single-point evaluation in SI units.
double spectrum_value(const SpectrumParams& params, double nu_hz,
                      const SpectrumModelOptions& opts = {});

struct SpectrumFitOptions {
    double laser_linewidth_init_hz = 0.5e6;
    SpectrumModelOptions model;
    LeastSquaresOptions lsq;
};

struct SpectrumFit {
    FitResult fit;               ///< parameters in internal MHz units
    SpectrumParams params;       ///< SI
    SpectrumParams one_sigma;    ///< SI
};

/// Fit of a fluorescence scan. Requires >= 8 points with an interior peak
/// (InsufficientDataError otherwise). Initialization: nu0 from the
/// steepest descending edge, Gamma_T from the red-wing half-max width,
/// Delta_L from the caller.
SpectrumFit fit_spectrum(const SpectrumScan& scan, const SpectrumFitOptions& opts = {});

/// Flat "name = value +- sigma" rendering for CLI output.
std::string serialize_fit(const ImageFit& f);
std::string serialize_fit(const SpectrumFit& f);

} // namespace iontherm
