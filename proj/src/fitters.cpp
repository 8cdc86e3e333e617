#include "iontherm/fitters.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace iontherm {

FitResult least_squares(const ResidualFn& fn, int n_residuals, Eigen::VectorXd initial,
                        const LeastSquaresOptions& opts) {
    const int n_params = static_cast<int>(initial.size());
    if (n_params == 0) throw FitError("least_squares: empty parameter vector");
    if (n_residuals < 1) throw FitError("least_squares: no residuals");

    Eigen::VectorXd p = std::move(initial);
    Eigen::VectorXd r(n_residuals);
    Eigen::MatrixXd jac(n_residuals, n_params);

    fn(p, r, &jac);
    if (!r.allFinite()) throw FitError("least_squares: non-finite residuals at the initial guess");
    double ssr = r.squaredNorm();

    FitResult result;
    result.accepted_ssr.push_back(ssr);

    double lambda = opts.initial_lambda;
    Eigen::VectorXd r_try(n_residuals);
    int it = 0;
    bool converged = false;

    while (it < opts.max_iterations && !converged) {
        ++it;
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd grad = jac.transpose() * r;

        const double max_diag = jtj.diagonal().maxCoeff();
        if (!(max_diag > 0.0) || !jtj.allFinite())
            throw RankDeficiencyError("least_squares: singular normal equations (all-zero Jacobian)");
        // A dead column must not leave the damped system singular.
        Eigen::VectorXd damping = jtj.diagonal().cwiseMax(1e-14 * max_diag);

        Eigen::VectorXd step;
        bool solved = false;
        while (!solved) {
            Eigen::MatrixXd damped = jtj;
            damped.diagonal() += lambda * damping;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
            if (ldlt.info() == Eigen::Success) {
                step = ldlt.solve(-grad);
                solved = step.allFinite();
            }
            if (!solved) {
                lambda *= 10.0;
                if (lambda > 1e16)
                    throw RankDeficiencyError("least_squares: singular normal equations");
            }
        }

        const Eigen::VectorXd p_try = p + step;
        fn(p_try, r_try, nullptr);
        const double ssr_try = r_try.allFinite() ? r_try.squaredNorm()
                                                 : std::numeric_limits<double>::infinity();

        if (ssr_try <= ssr) {
            const double rel_drop = (ssr - ssr_try) / std::max(ssr, 1e-300);
            const double rel_step = step.norm() / (p.norm() + 1e-300);
            p = p_try;
            r.swap(r_try);
            ssr = ssr_try;
            result.accepted_ssr.push_back(ssr);
            fn(p, r, &jac);
            lambda = std::max(lambda / 3.0, 1e-12);
            if (rel_step < opts.step_tolerance || rel_drop < opts.residual_tolerance)
                converged = true;
        } else {
            lambda *= 4.0;
            if (lambda > 1e16) break;  // stalled; report best-so-far
        }
    }

    result.parameters = p;
    result.residual_norm = std::sqrt(ssr);
    result.iterations = it;
    result.converged = converged;

    // Covariance: residual-variance-scaled pseudo-inverse of J^T J; the
    // pseudo-inverse keeps degenerate directions at zero instead of
    // blowing up.
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const double dof = std::max(1, n_residuals - n_params);
    const double s2 = ssr / dof;
    Eigen::MatrixXd inv = jtj.completeOrthogonalDecomposition().pseudoInverse();
    result.covariance = 0.5 * s2 * (inv + inv.transpose());
    return result;
}

void gauss2d_model(const Eigen::VectorXd& p, int width, int height, Eigen::VectorXd& value,
                   Eigen::MatrixXd* jac) {
    const double amp = p[0], x0 = p[1], y0 = p[2], wx = p[3], wy = p[4], phi = p[5], off = p[6];
    const double c = std::cos(phi), s = std::sin(phi);
    const double inv_wx2 = 1.0 / (wx * wx), inv_wy2 = 1.0 / (wy * wy);

    const long n = static_cast<long>(width) * height;
    value.resize(n);
    if (jac) jac->resize(n, 7);

    long row = 0;
    for (int iy = 0; iy < height; ++iy) {
        const double dy = (iy + 0.5 - 0.5 * height) - y0;
        for (int ix = 0; ix < width; ++ix, ++row) {
            const double dx = (ix + 0.5 - 0.5 * width) - x0;
            const double u = c * dx + s * dy;
            const double v = -s * dx + c * dy;
            const double e = std::exp(-2.0 * (u * u * inv_wx2 + v * v * inv_wy2));
            value[row] = amp * e + off;
            if (jac) {
                const double ae = amp * e;
                (*jac)(row, 0) = e;
                (*jac)(row, 1) = ae * 4.0 * (u * c * inv_wx2 - v * s * inv_wy2);
                (*jac)(row, 2) = ae * 4.0 * (u * s * inv_wx2 + v * c * inv_wy2);
                (*jac)(row, 3) = ae * 4.0 * u * u * inv_wx2 / wx;
                (*jac)(row, 4) = ae * 4.0 * v * v * inv_wy2 / wy;
                (*jac)(row, 5) = ae * 4.0 * u * v * (inv_wy2 - inv_wx2);
                (*jac)(row, 6) = 1.0;
            }
        }
    }
}

namespace {

double border_median(const IonImage& img) {
    std::vector<double> border;
    border.reserve(2 * (img.width + img.height));
    for (int ix = 0; ix < img.width; ++ix) {
        border.push_back(img.at(ix, 0));
        border.push_back(img.at(ix, img.height - 1));
    }
    for (int iy = 1; iy + 1 < img.height; ++iy) {
        border.push_back(img.at(0, iy));
        border.push_back(img.at(img.width - 1, iy));
    }
    std::nth_element(border.begin(), border.begin() + border.size() / 2, border.end());
    return border[border.size() / 2];
}

double wrap_angle_deg(double deg) {
    while (deg > 90.0) deg -= 180.0;
    while (deg <= -90.0) deg += 180.0;
    return deg;
}

} // namespace

ImageFit fit_ion_image(const IonImage& image, const ImageFitOptions& opts) {
    const auto [min_it, max_it] = std::minmax_element(image.counts.begin(), image.counts.end());
    if (!(*max_it > *min_it)) throw FitError("fit_ion_image: image is flat");

    // Moment-based initialization over background-subtracted counts. The
    // subtraction sits a few shot-noise sigmas above the border level so
    // background fluctuations cannot dominate the second moments.
    const double b0 = border_median(image);
    double clip = b0 + 3.0 * std::sqrt(std::max(b0, 1.0));
    if (clip >= *max_it) clip = b0;
    double mass = 0.0, mx = 0.0, my = 0.0;
    for (int iy = 0; iy < image.height; ++iy)
        for (int ix = 0; ix < image.width; ++ix) {
            const double w = std::max(image.at(ix, iy) - clip, 0.0);
            mass += w;
            mx += w * (ix + 0.5 - 0.5 * image.width);
            my += w * (iy + 0.5 - 0.5 * image.height);
        }
    if (!(mass > 0.0)) throw FitError("fit_ion_image: no signal above the border level");
    mx /= mass;
    my /= mass;

    double vxx = 0.0, vyy = 0.0, vxy = 0.0;
    for (int iy = 0; iy < image.height; ++iy)
        for (int ix = 0; ix < image.width; ++ix) {
            const double w = std::max(image.at(ix, iy) - clip, 0.0);
            const double dx = (ix + 0.5 - 0.5 * image.width) - mx;
            const double dy = (iy + 0.5 - 0.5 * image.height) - my;
            vxx += w * dx * dx;
            vyy += w * dy * dy;
            vxy += w * dx * dy;
        }
    vxx /= mass;
    vyy /= mass;
    vxy /= mass;

    Eigen::VectorXd p0(7);
    p0[0] = *max_it - *min_it;
    p0[1] = mx;
    p0[2] = my;
    p0[3] = 2.0 * std::sqrt(std::max(vxx, 0.25));
    p0[4] = 2.0 * std::sqrt(std::max(vyy, 0.25));
    p0[5] = opts.rotation_free ? 0.5 * std::atan2(2.0 * vxy, vxx - vyy) : 0.0;
    p0[6] = b0;

    // Optional Poisson weighting: rows scaled by 1/sqrt(max(counts, 1)).
    Eigen::VectorXd inv_sigma;
    if (opts.poisson_weights) {
        inv_sigma.resize(static_cast<long>(image.counts.size()));
        for (long i = 0; i < inv_sigma.size(); ++i)
            inv_sigma[i] = 1.0 / std::sqrt(std::max(image.counts[i], 1.0));
    }

    const std::vector<int> active = opts.rotation_free ? std::vector<int>{0, 1, 2, 3, 4, 5, 6}
                                                       : std::vector<int>{0, 1, 2, 3, 4, 6};
    Eigen::VectorXd full = p0;
    auto residual = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        for (size_t k = 0; k < active.size(); ++k) full[active[k]] = q[k];
        Eigen::VectorXd model;
        Eigen::MatrixXd jfull;
        gauss2d_model(full, image.width, image.height, model, jac ? &jfull : nullptr);
        r.resize(model.size());
        for (long i = 0; i < model.size(); ++i) r[i] = model[i] - image.counts[i];
        if (jac) {
            jac->resize(model.size(), static_cast<long>(active.size()));
            for (size_t k = 0; k < active.size(); ++k) jac->col(k) = jfull.col(active[k]);
        }
        if (opts.poisson_weights) {
            r.array() *= inv_sigma.array();
            if (jac) jac->array().colwise() *= inv_sigma.array();
        }
    };

    Eigen::VectorXd q0(active.size());
    for (size_t k = 0; k < active.size(); ++k) q0[k] = p0[active[k]];
    ImageFit out;
    out.fit = least_squares(residual, static_cast<int>(image.counts.size()), q0, opts.lsq);

    Eigen::VectorXd pf = p0;
    for (size_t k = 0; k < active.size(); ++k) pf[active[k]] = out.fit.parameters[k];
    // The model is even in the radii; report them positive, angle in (-90, 90].
    pf[3] = std::abs(pf[3]);
    pf[4] = std::abs(pf[4]);

    const double pitch = image.pixel_pitch_m;
    out.params.amplitude = pf[0];
    out.params.center_x_m = pf[1] * pitch;
    out.params.center_y_m = pf[2] * pitch;
    out.params.radius_x_m = pf[3] * pitch;
    out.params.radius_y_m = pf[4] * pitch;
    out.params.rotation_deg = wrap_angle_deg(rad_to_deg(pf[5]));
    out.params.offset = pf[6];

    auto sig = [&](int full_index) {
        const auto it = std::find(active.begin(), active.end(), full_index);
        return it == active.end() ? 0.0
                                  : out.fit.sigma(static_cast<int>(it - active.begin()));
    };
    out.one_sigma.amplitude = sig(0);
    out.one_sigma.center_x_m = sig(1) * pitch;
    out.one_sigma.center_y_m = sig(2) * pitch;
    out.one_sigma.radius_x_m = sig(3) * pitch;
    out.one_sigma.radius_y_m = sig(4) * pitch;
    out.one_sigma.rotation_deg = rad_to_deg(sig(5));
    out.one_sigma.offset = sig(6);
    return out;
}

void spectrum_model(const Eigen::VectorXd& p, const std::vector<double>& nu_mhz,
                    Eigen::VectorXd& value, Eigen::MatrixXd* jac,
                    const SpectrumModelOptions& opts) {
    const double amp = p[0], nu0 = p[1], fwhm = p[2], dl = p[3], off = p[4];
    const double half = 0.5 * fwhm;
    const double step_scale = opts.literal_step ? 1.0 : 1.0 / constants::pi;

    const long n = static_cast<long>(nu_mhz.size());
    value.resize(n);
    if (jac) jac->resize(n, 5);

    for (long i = 0; i < n; ++i) {
        const double dnu = nu0 - nu_mhz[i];  // positive red of resonance
        const double lor = 1.0 / (dnu * dnu + half * half);
        const double base = opts.literal_step ? 0.0 : 0.5;
        const double step = base + step_scale * std::atan(dnu / dl);
        value[i] = amp * lor * step + off;
        if (jac) {
            const double dstep_ddnu = step_scale * dl / (dl * dl + dnu * dnu);
            const double dlor_ddnu = -2.0 * dnu * lor * lor;
            (*jac)(i, 0) = lor * step;
            (*jac)(i, 1) = amp * (dlor_ddnu * step + lor * dstep_ddnu);
            (*jac)(i, 2) = amp * step * (-half * lor * lor);
            (*jac)(i, 3) = amp * lor * step_scale * (-dnu) / (dl * dl + dnu * dnu);
            (*jac)(i, 4) = 1.0;
        }
    }
}

double spectrum_value(const SpectrumParams& params, double nu_hz, const SpectrumModelOptions& opts) {
    Eigen::VectorXd p(5);
    p << params.amplitude * 1e-12, params.center_hz * 1e-6, params.fwhm_total_hz * 1e-6,
        params.laser_linewidth_hz * 1e-6, params.offset_rate;
    Eigen::VectorXd v;
    spectrum_model(p, {nu_hz * 1e-6}, v, nullptr, opts);
    return v[0];
}

SpectrumFit fit_spectrum(const SpectrumScan& scan, const SpectrumFitOptions& opts) {
    const auto& pts = scan.points;
    if (pts.size() < 8)
        throw InsufficientDataError("fit_spectrum: need at least 8 scan points, got " +
                                    std::to_string(pts.size()));

    std::vector<double> nu(pts.size()), rate(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        nu[i] = pts[i].detuning_hz * 1e-6;  // MHz internally
        rate[i] = pts[i].rate_hz;
    }

    const size_t peak = std::max_element(rate.begin(), rate.end()) - rate.begin();
    if (peak == 0 || peak + 1 == pts.size())
        throw InsufficientDataError("fit_spectrum: scan does not span the peak and the cutoff");

    const double b0 = *std::min_element(rate.begin(), rate.end());
    const double peak_height = rate[peak] - b0;
    if (!(peak_height > 0.0)) throw InsufficientDataError("fit_spectrum: flat scan");

    // Red-wing half-max width.
    double half_width = 0.5 * (nu.back() - nu.front());
    for (size_t i = peak; i-- > 0;) {
        if (rate[i] - b0 < 0.5 * peak_height) {
            const double f = (0.5 * peak_height - (rate[i] - b0)) /
                             std::max(rate[i + 1] - rate[i], 1e-300);
            half_width = nu[peak] - (nu[i] + f * (nu[i + 1] - nu[i]));
            break;
        }
    }

    // Steepest descending edge blue of the peak locates the cutoff.
    double nu0 = nu[peak] + 0.5 * half_width;
    double steepest = 0.0;
    for (size_t i = peak; i + 1 < pts.size(); ++i) {
        const double slope = (rate[i] - rate[i + 1]) / std::max(nu[i + 1] - nu[i], 1e-300);
        if (slope > steepest) {
            steepest = slope;
            nu0 = 0.5 * (nu[i] + nu[i + 1]);
        }
    }

    Eigen::VectorXd p0(5);
    p0[2] = std::max(2.0 * half_width, 1e-3);
    p0[1] = nu0;
    p0[3] = std::max(opts.laser_linewidth_init_hz * 1e-6, 1e-4);
    p0[0] = peak_height * (0.25 * p0[2] * p0[2]);
    p0[4] = b0;

    auto residual = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        Eigen::VectorXd model;
        spectrum_model(q, nu, model, jac, opts.model);
        r.resize(model.size());
        for (long i = 0; i < model.size(); ++i) r[i] = model[i] - rate[i];
    };

    SpectrumFit out;
    out.fit = least_squares(residual, static_cast<int>(pts.size()), p0, opts.lsq);

    const Eigen::VectorXd& pf = out.fit.parameters;
    out.params.amplitude = pf[0] * 1e12;
    out.params.center_hz = pf[1] * 1e6;
    out.params.fwhm_total_hz = std::abs(pf[2]) * 1e6;
    out.params.laser_linewidth_hz = pf[3] * 1e6;
    out.params.offset_rate = pf[4];
    out.one_sigma.amplitude = out.fit.sigma(0) * 1e12;
    out.one_sigma.center_hz = out.fit.sigma(1) * 1e6;
    out.one_sigma.fwhm_total_hz = out.fit.sigma(2) * 1e6;
    out.one_sigma.laser_linewidth_hz = out.fit.sigma(3) * 1e6;
    out.one_sigma.offset_rate = out.fit.sigma(4);
    return out;
}

namespace {

void line(std::ostringstream& os, const char* name, double value, double sigma) {
    os << name << " = " << value << " +- " << sigma << "\n";
}

} // namespace

std::string serialize_fit(const ImageFit& f) {
    std::ostringstream os;
    os.precision(10);
    line(os, "amplitude_counts", f.params.amplitude, f.one_sigma.amplitude);
    line(os, "center_x_nm", f.params.center_x_m * 1e9, f.one_sigma.center_x_m * 1e9);
    line(os, "center_y_nm", f.params.center_y_m * 1e9, f.one_sigma.center_y_m * 1e9);
    line(os, "radius_x_nm", f.params.radius_x_m * 1e9, f.one_sigma.radius_x_m * 1e9);
    line(os, "radius_y_nm", f.params.radius_y_m * 1e9, f.one_sigma.radius_y_m * 1e9);
    line(os, "rotation_deg", f.params.rotation_deg, f.one_sigma.rotation_deg);
    line(os, "offset_counts", f.params.offset, f.one_sigma.offset);
    os << "converged = " << (f.fit.converged ? "true" : "false") << "\n"
       << "iterations = " << f.fit.iterations << "\n"
       << "residual_norm = " << f.fit.residual_norm << "\n";
    return os.str();
}

std::string serialize_fit(const SpectrumFit& f) {
    std::ostringstream os;
    os.precision(10);
    line(os, "amplitude_rate_hz2", f.params.amplitude, f.one_sigma.amplitude);
    line(os, "center_mhz", f.params.center_hz * 1e-6, f.one_sigma.center_hz * 1e-6);
    line(os, "fwhm_total_mhz", f.params.fwhm_total_hz * 1e-6, f.one_sigma.fwhm_total_hz * 1e-6);
    line(os, "laser_linewidth_mhz", f.params.laser_linewidth_hz * 1e-6,
         f.one_sigma.laser_linewidth_hz * 1e-6);
    line(os, "offset_rate_hz", f.params.offset_rate, f.one_sigma.offset_rate);
    os << "converged = " << (f.fit.converged ? "true" : "false") << "\n"
       << "iterations = " << f.fit.iterations << "\n"
       << "residual_norm = " << f.fit.residual_norm << "\n";
    return os.str();
}

} // namespace iontherm
