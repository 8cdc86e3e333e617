#include <doctest.h>

#include <cmath>

#include "iontherm/fitters.hpp"
#include "iontherm/imaging.hpp"
#include "iontherm/rng.hpp"
#include "support/oracles.hpp"

using namespace iontherm;

TEST_CASE("least squares: exact linear model converges immediately") {
    std::vector<double> x{0.5, 1.0, 1.5, 2.0, 3.0, 4.5};
    std::vector<double> y;
    for (double xi : x) y.push_back(3.0 * xi);

    auto fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(static_cast<long>(x.size()));
        if (jac) jac->resize(static_cast<long>(x.size()), 1);
        for (size_t i = 0; i < x.size(); ++i) {
            r[static_cast<long>(i)] = p[0] * x[i] - y[i];
            if (jac) (*jac)(static_cast<long>(i), 0) = x[i];
        }
    };
    Eigen::VectorXd p0(1);
    p0 << 0.0;
    const auto fit = least_squares(fn, static_cast<int>(x.size()), p0);
    CHECK(fit.converged);
    CHECK(fit.iterations <= 3);
    CHECK(fit.parameters[0] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("least squares: bent-valley residuals reach the known minimum") {
    auto fn = [](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(2);
        r[0] = 10.0 * (p[1] - p[0] * p[0]);
        r[1] = 1.0 - p[0];
        if (jac) {
            jac->resize(2, 2);
            (*jac)(0, 0) = -20.0 * p[0];
            (*jac)(0, 1) = 10.0;
            (*jac)(1, 0) = -1.0;
            (*jac)(1, 1) = 0.0;
        }
    };
    Eigen::VectorXd p0(2);
    p0 << -1.2, 1.0;
    const auto fit = least_squares(fn, 2, p0);
    CHECK(fit.converged);
    CHECK(fit.parameters[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(fit.parameters[1] == doctest::Approx(1.0).epsilon(1e-8));
    for (size_t i = 1; i < fit.accepted_ssr.size(); ++i)
        CHECK(fit.accepted_ssr[i] <= fit.accepted_ssr[i - 1]);
}

TEST_CASE("least squares: all-zero data drives a linear amplitude to zero with flat covariance") {
    auto fn = [](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(5);
        if (jac) jac->resize(5, 1);
        for (int i = 0; i < 5; ++i) {
            const double basis = std::exp(-0.5 * i);
            r[i] = p[0] * basis;
            if (jac) (*jac)(i, 0) = basis;
        }
    };
    Eigen::VectorXd p0(1);
    p0 << 2.5;
    const auto fit = least_squares(fn, 5, p0);
    CHECK(fit.converged);
    CHECK(std::abs(fit.parameters[0]) < 1e-12);
    CHECK(fit.covariance(0, 0) == doctest::Approx(0.0).epsilon(1e-20));
}

TEST_CASE("least squares: all-zero Jacobian raises rank deficiency") {
    auto fn = [](const Eigen::VectorXd&, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(3);
        r << 1.0, 2.0, 3.0;
        if (jac) {
            jac->resize(3, 1);
            jac->setZero();
        }
    };
    Eigen::VectorXd p0(1);
    p0 << 1.0;
    CHECK_THROWS_AS(least_squares(fn, 3, p0), RankDeficiencyError);
}

TEST_CASE("gauss2d model: peak value and 1/e^2 definition") {
    // Coordinates are pixel centers relative to the grid middle; on a
    // 33x33 grid pixel (16,16) sits exactly at the origin.
    Eigen::VectorXd p(7);
    const double amp = 80.0, wx = 5.0, wy = 3.0, off = 7.0;
    p << amp, 0.0, 0.0, wx, wy, 0.0, off;
    Eigen::VectorXd v;
    gauss2d_model(p, 33, 33, v, nullptr);
    auto at = [&](int ix, int iy) { return v[iy * 33 + ix]; };
    CHECK(at(16, 16) == doctest::Approx(amp + off).epsilon(1e-12));

    // One 1/e^2 radius along x from the peak: pixel (16 + wx, 16).
    CHECK(at(21, 16) == doctest::Approx(amp * std::exp(-2.0) + off).epsilon(1e-12));
    // And along y.
    CHECK(at(16, 19) == doctest::Approx(amp * std::exp(-2.0) + off).epsilon(1e-12));
}

TEST_CASE("gauss2d Jacobian matches central finite differences at random points") {
    Rng rng(314);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd p(7);
        p << 20.0 + 180.0 * rng.uniform(), 8.0 + 8.0 * rng.uniform(), 8.0 + 8.0 * rng.uniform(),
            2.0 + 6.0 * rng.uniform(), 2.0 + 6.0 * rng.uniform(),
            (rng.uniform() - 0.5) * 2.8, 30.0 * rng.uniform();
        auto model = [](const Eigen::VectorXd& q, Eigen::VectorXd& val, Eigen::MatrixXd* jac) {
            gauss2d_model(q, 24, 24, val, jac);
        };
        CHECK(oracles::jacobian_fd_error(model, p) < 1e-5);
    }
}

TEST_CASE("spectrum Jacobian matches central finite differences at random points") {
    Rng rng(2718);
    std::vector<double> nu;
    for (double m = -80.0; m <= 10.0; m += 2.5) nu.push_back(m);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd p(5);
        p << 1e8 + 4e9 * rng.uniform(), -4.0 + 8.0 * rng.uniform(), 12.0 + 45.0 * rng.uniform(),
            0.3 + 4.0 * rng.uniform(), 1e4 * rng.uniform();
        SpectrumModelOptions opts;
        opts.literal_step = trial % 2 == 1;
        auto model = [&](const Eigen::VectorXd& q, Eigen::VectorXd& val, Eigen::MatrixXd* jac) {
            spectrum_model(q, nu, val, jac, opts);
        };
        CHECK(oracles::jacobian_fd_error(model, p) < 1e-5);
    }
}

namespace {

ImagingConfig test_imaging(int grid = 96) {
    ImagingConfig imaging;
    imaging.psf_radius_m = 300e-9;
    imaging.pixel_pitch_m = 22e-9;
    imaging.quantum_efficiency = 1.0;
    imaging.read_noise_counts = 0.0;
    imaging.baseline_offset_counts = 0.0;
    imaging.grid_width = grid;
    imaging.grid_height = grid;
    return imaging;
}

} // namespace

TEST_CASE("fit_ion_image: noiseless image recovers the convolved radius to 0.2%") {
    const auto imaging = test_imaging();
    const auto image = render_image(100e-9, 140e-9, 0.0, imaging, 1e4, 1, false);
    const auto fit = fit_ion_image(image);
    CHECK(fit.fit.converged);
    const double expect_x = std::sqrt(4.0 * 100e-9 * 100e-9 + 300e-9 * 300e-9);
    const double expect_y = std::sqrt(4.0 * 140e-9 * 140e-9 + 300e-9 * 300e-9);
    CHECK(expect_x == doctest::Approx(360.555e-9).epsilon(1e-4));
    CHECK(std::abs(fit.params.radius_x_m - expect_x) / expect_x < 0.002);
    CHECK(std::abs(fit.params.radius_y_m - expect_y) / expect_y < 0.002);
    CHECK(std::abs(fit.params.center_x_m) < 0.5e-9);
    CHECK(std::abs(fit.params.offset) < 1e-6 * fit.params.amplitude);
}

TEST_CASE("fit_ion_image: Poisson ensemble is unbiased and errors are calibrated") {
    // A camera baseline keeps the per-pixel variance landscape uniform
    // enough for the residual-variance-scaled covariance to be calibrated.
    auto imaging = test_imaging();
    imaging.baseline_offset_counts = 20.0;
    const double sigma = 100e-9;
    const double expect = std::sqrt(4.0 * sigma * sigma + 300e-9 * 300e-9);

    const int n_runs = 40;
    std::vector<double> recovered, reported;
    for (int i = 0; i < n_runs; ++i) {
        const auto image = render_image(sigma, sigma, 0.0, imaging, 1e4, 100 + i, true);
        const auto fit = fit_ion_image(image);
        REQUIRE(fit.fit.converged);
        recovered.push_back(fit.params.radius_x_m);
        reported.push_back(fit.one_sigma.radius_x_m);
    }
    double mean = 0.0, var = 0.0, mean_rep = 0.0;
    for (double w : recovered) mean += w;
    mean /= n_runs;
    for (double w : recovered) var += (w - mean) * (w - mean);
    var /= (n_runs - 1);
    for (double e : reported) mean_rep += e;
    mean_rep /= n_runs;

    const double sd = std::sqrt(var);
    const double se_mean = sd / std::sqrt(static_cast<double>(n_runs));
    CHECK(std::abs(mean - expect) < 3.0 * se_mean);       // unbiased
    CHECK(sd / expect < 0.05);                            // sane statistical scale
    CHECK(mean_rep / sd > 1.0 / 1.8);                     // reported errors calibrated
    CHECK(mean_rep / sd < 1.8);
}

TEST_CASE("fit_ion_image: 30-degree spot rotation recovered within 1 degree") {
    const auto imaging = test_imaging(128);
    const auto image = render_image(180e-9, 60e-9, 30.0, imaging, 5e4, 7, false);
    ImageFitOptions opts;
    opts.rotation_free = true;
    const auto fit = fit_ion_image(image, opts);
    CHECK(fit.fit.converged);
    double rel = fit.params.rotation_deg - 30.0;
    while (rel > 90.0) rel -= 180.0;
    while (rel < -90.0) rel += 180.0;
    CHECK(std::abs(rel) < 1.0);
}

TEST_CASE("fit_ion_image equivariance: whole-pixel translation shifts only the center") {
    const auto imaging = test_imaging();
    const auto image = render_image(90e-9, 120e-9, 0.0, imaging, 2e4, 3, false);

    IonImage shifted = image;
    const int dx = 3, dy = -2;
    for (int iy = 0; iy < image.height; ++iy)
        for (int ix = 0; ix < image.width; ++ix) {
            const int sx = (ix - dx + image.width) % image.width;
            const int sy = (iy - dy + image.height) % image.height;
            shifted.at(ix, iy) = image.at(sx, sy);
        }

    const auto a = fit_ion_image(image);
    const auto b = fit_ion_image(shifted);
    const double pitch = imaging.pixel_pitch_m;
    CHECK(std::abs((b.params.center_x_m - a.params.center_x_m) - dx * pitch) < 1e-6 * pitch);
    CHECK(std::abs((b.params.center_y_m - a.params.center_y_m) - dy * pitch) < 1e-6 * pitch);
    CHECK(b.params.radius_x_m == doctest::Approx(a.params.radius_x_m).epsilon(1e-6));
    CHECK(b.params.radius_y_m == doctest::Approx(a.params.radius_y_m).epsilon(1e-6));
    CHECK(b.params.amplitude == doctest::Approx(a.params.amplitude).epsilon(1e-6));
    CHECK(std::abs(b.params.offset - a.params.offset) < 1e-6 * a.params.amplitude);
}

TEST_CASE("fit_ion_image: count scaling rescales amplitude and offset only") {
    auto imaging = test_imaging();
    imaging.baseline_offset_counts = 11.0;
    const auto image = render_image(110e-9, 80e-9, 0.0, imaging, 2e4, 5, false);
    IonImage scaled = image;
    const double c = 3.7;
    for (auto& v : scaled.counts) v *= c;

    const auto a = fit_ion_image(image);
    const auto b = fit_ion_image(scaled);
    CHECK(b.params.amplitude == doctest::Approx(c * a.params.amplitude).epsilon(1e-8));
    CHECK(b.params.offset == doctest::Approx(c * a.params.offset).epsilon(1e-8));
    CHECK(b.params.radius_x_m == doctest::Approx(a.params.radius_x_m).epsilon(1e-9));
    CHECK(b.params.radius_y_m == doctest::Approx(a.params.radius_y_m).epsilon(1e-9));
    CHECK(std::abs(b.params.center_x_m - a.params.center_x_m) < 1e-12);
}

TEST_CASE("fit_ion_image: flat image is an error") {
    IonImage img;
    img.width = img.height = 16;
    img.pixel_pitch_m = 22e-9;
    img.counts.assign(256, 5.0);
    CHECK_THROWS_AS(fit_ion_image(img), FitError);
}

TEST_CASE("fit_ion_image: Poisson weighting stays consistent with unweighted") {
    auto imaging = test_imaging();
    imaging.baseline_offset_counts = 20.0;
    const auto image = render_image(120e-9, 120e-9, 0.0, imaging, 1e4, 21, true);
    ImageFitOptions weighted;
    weighted.poisson_weights = true;
    const auto a = fit_ion_image(image);
    const auto b = fit_ion_image(image, weighted);
    CHECK(b.fit.converged);
    // Different estimators on the same noisy frame; they agree to within
    // the statistical scale of the fit.
    CHECK(std::abs(b.params.radius_x_m - a.params.radius_x_m) / a.params.radius_x_m < 0.1);
}

TEST_CASE("spectrum model: limits and center value") {
    SpectrumParams params;
    params.amplitude = 4e14;         // rate * Hz^2
    params.center_hz = 0.0;
    params.fwhm_total_hz = 30e6;
    params.laser_linewidth_hz = 1e6;
    params.offset_rate = 500.0;

    const double far_red = spectrum_value(params, -5e9);
    const double far_blue = spectrum_value(params, +5e9);
    CHECK(far_red == doctest::Approx(params.offset_rate).epsilon(1e-4));
    CHECK(far_blue == doctest::Approx(params.offset_rate).epsilon(1e-4));

    const double center = spectrum_value(params, 0.0);
    CHECK(center == doctest::Approx(params.amplitude / (15e6 * 15e6) * 0.5 + 500.0).epsilon(1e-12));

    // Bare-arctan variant: zero step at line center, negative weight on the
    // blue side (comparison mode only).
    SpectrumModelOptions literal;
    literal.literal_step = true;
    CHECK(spectrum_value(params, 0.0, literal) == doctest::Approx(500.0).epsilon(1e-12));
    CHECK(spectrum_value(params, 20e6, literal) < params.offset_rate);
}

TEST_CASE("fit_spectrum: noiseless self-consistency to 1e-6") {
    SpectrumParams truth;
    truth.amplitude = 6e14;
    truth.center_hz = 0.8e6;
    truth.fwhm_total_hz = 31e6;
    truth.laser_linewidth_hz = 1.3e6;
    truth.offset_rate = 2e3;

    SpectrumScan scan;
    for (double mhz = -70.0; mhz <= 10.0; mhz += 1.6)
        scan.points.push_back({mhz * 1e6, spectrum_value(truth, mhz * 1e6), 1e-3});

    SpectrumFitOptions opts;
    opts.laser_linewidth_init_hz = 0.7e6;
    const auto fit = fit_spectrum(scan, opts);
    CHECK(fit.fit.converged);
    CHECK(fit.params.amplitude == doctest::Approx(truth.amplitude).epsilon(1e-6));
    CHECK(fit.params.center_hz == doctest::Approx(truth.center_hz).epsilon(1e-6));
    CHECK(fit.params.fwhm_total_hz == doctest::Approx(truth.fwhm_total_hz).epsilon(1e-6));
    CHECK(fit.params.laser_linewidth_hz == doctest::Approx(truth.laser_linewidth_hz).epsilon(1e-6));
    CHECK(fit.params.offset_rate == doctest::Approx(truth.offset_rate).epsilon(1e-4));
}

TEST_CASE("fit_spectrum: live-dynamics scan fits wider than the zero-temperature line") {
    Scenario s = default_scenario();
    NoiseDriveConfig noise = s.noise;
    noise.force_psd = 2e-44;  // hot enough that Doppler broadening is unmistakable

    std::vector<double> grid;
    for (double mhz = -110.0; mhz <= 2.01; mhz += 2.5) grid.push_back(mhz * 1e6);
    const auto scan =
        dynamic_spectrum_scan(s.trap, s.laser, noise, s.ion, s.sim, grid, 6e-3, 2027);

    SpectrumFitOptions opts;
    opts.laser_linewidth_init_hz = s.laser.linewidth.hz;
    const auto fit = fit_spectrum(scan, opts);
    REQUIRE(fit.fit.converged);

    // Saturation-broadened homogeneous width of a motionless ion.
    const double zero_t_width = s.laser.response_linewidth(s.ion) / constants::two_pi *
                                std::sqrt(1.0 + s.laser.saturation);
    CHECK(fit.params.fwhm_total_hz > zero_t_width);
}

TEST_CASE("fit_spectrum: too few points or no spanned peak errors out") {
    SpectrumScan tiny;
    for (int i = 0; i < 5; ++i) tiny.points.push_back({i * 1e6, 100.0 + i, 1e-3});
    CHECK_THROWS_AS(fit_spectrum(tiny), InsufficientDataError);

    SpectrumScan ramp;  // peak at the edge: cutoff never spanned
    for (int i = 0; i < 12; ++i) ramp.points.push_back({i * 1e6, 100.0 + 10.0 * i, 1e-3});
    CHECK_THROWS_AS(fit_spectrum(ramp), InsufficientDataError);
}

TEST_CASE("serialize_fit emits flat key-value lines") {
    const auto imaging = test_imaging();
    const auto image = render_image(100e-9, 100e-9, 0.0, imaging, 1e4, 11, false);
    const auto fit = fit_ion_image(image);
    const std::string text = serialize_fit(fit);
    CHECK(text.find("radius_x_nm = ") != std::string::npos);
    CHECK(text.find("+-") != std::string::npos);
    CHECK(text.find("converged = true") != std::string::npos);
}
