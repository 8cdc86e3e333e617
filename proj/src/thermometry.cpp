#include "iontherm/thermometry.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "iontherm/io_util.hpp"

namespace iontherm {

using constants::k_boltzmann;

namespace {
constexpr double kOlLinear = 0.5346;
constexpr double kOlQuad = 0.2166;
const double kEightLn2 = 8.0 * std::numbers::ln2;
} // namespace

std::string to_string(Mode m) { return m == Mode::Physical ? "physical" : "paper-literal"; }

Mode mode_from_string(const std::string& s) {
    if (s == "physical") return Mode::Physical;
    if (s == "paper-literal") return Mode::PaperLiteral;
    throw ConfigError("mode: expected physical|paper-literal, got '" + s + "'");
}

std::string ThermometryFlags::to_csv_token() const {
    std::string out;
    auto add = [&out](bool on, const char* name) {
        if (!on) return;
        if (!out.empty()) out += ';';
        out += name;
    };
    add(clamped, "clamped");
    add(clamped_lo, "clamped_lo");
    add(clamped_hi, "clamped_hi");
    add(near_boundary, "near_boundary");
    add(truncated, "truncated");
    add(unconverged, "unconverged");
    return out;
}

ResolutionBounds ResolutionBounds::from_imaging(const ImagingConfig& imaging, double wavelength_m) {
    ResolutionBounds b;
    b.w_lo_m = diffraction_limit(wavelength_m, imaging.numerical_aperture);
    b.w_hi_m = imaging.min_observed_spot_m;
    if (!(b.w_lo_m <= b.w_hi_m))
        throw ConfigError("imaging.min_observed_spot: smaller than the diffraction limit");
    return b;
}

Deconvolved variance_deconvolve(double w_obs_m, double w_i_m) {
    if (!(w_obs_m > 0.0)) throw DomainError("variance_deconvolve: observed radius must be > 0");
    if (!(w_i_m >= 0.0)) throw DomainError("variance_deconvolve: resolution must be >= 0");
    const double raw = (w_obs_m * w_obs_m - w_i_m * w_i_m) / 4.0;
    if (raw <= 0.0) return {0.0, true};
    return {raw, false};
}

double temperature_from_variance(double variance_m2, OrdinaryFreq nu, const IonSpecies& ion, Mode mode) {
    if (!(variance_m2 >= 0.0)) throw DomainError("temperature_from_variance: variance must be >= 0");
    if (!(nu.hz > 0.0)) throw DomainError("temperature_from_variance: frequency must be > 0");
    const double pi_nu = constants::pi * nu.hz;
    // Physical: m (2 pi nu)^2 <x^2> / k_B. The literal variant keeps the
    // published pi^2 nu^2 prefactor, exactly 4x smaller.
    const double coeff = mode == Mode::Physical ? 4.0 * pi_nu * pi_nu : pi_nu * pi_nu;
    return ion.mass_kg * coeff * variance_m2 / k_boltzmann;
}

ThermometryResult spatial_result_from_radius(double w_obs_m, double w_err_m, OrdinaryFreq nu,
                                             const IonSpecies& ion, const ResolutionBounds& bounds,
                                             double w_i_nominal_m, Mode mode,
                                             const std::string& axis_label) {
    ThermometryResult r;
    r.axis = axis_label;
    r.method = "spatial";
    r.mode = mode;

    const auto nominal = variance_deconvolve(w_obs_m, w_i_nominal_m);
    r.flags.clamped = nominal.clamped;
    r.temperature_k = temperature_from_variance(nominal.variance_m2, nu, ion, mode);

    // Delta method: dT/dw * dw = T * 2 w dw / (w^2 - w_i^2), which equals
    // the temperature equivalent of a variance shift w dw / 2. That form
    // stays finite at the clamp boundary and is used there as well.
    r.stat_err_k = temperature_from_variance(0.5 * w_obs_m * w_err_m, nu, ion, mode);
    r.flags.near_boundary = !nominal.clamped && r.temperature_k < 2.0 * r.stat_err_k;

    const auto lo = variance_deconvolve(w_obs_m, bounds.w_hi_m);
    const auto hi = variance_deconvolve(w_obs_m, bounds.w_lo_m);
    r.flags.clamped_lo = lo.clamped;
    r.flags.clamped_hi = hi.clamped;
    r.sys_lo_k = temperature_from_variance(lo.variance_m2, nu, ion, mode);
    r.sys_hi_k = temperature_from_variance(hi.variance_m2, nu, ion, mode);
    return r;
}

std::vector<ThermometryResult> spatial_thermometry(const IonImage& image, const TrapConfig& trap,
                                                   const IonSpecies& ion, const ResolutionBounds& bounds,
                                                   double w_i_nominal_m, Mode mode,
                                                   const ImageFitOptions& fit_opts) {
    if (!(bounds.w_lo_m > 0.0 && bounds.w_lo_m <= bounds.w_hi_m))
        throw DomainError("spatial_thermometry: resolution bounds must satisfy 0 < w_lo <= w_hi");
    if (!(w_i_nominal_m >= bounds.w_lo_m && w_i_nominal_m <= bounds.w_hi_m))
        throw DomainError("spatial_thermometry: nominal resolution must lie inside the bounds");

    if (image.truncated) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        std::vector<ThermometryResult> out(2);
        const char* labels[2] = {"x", "y"};
        for (int a = 0; a < 2; ++a) {
            out[a].axis = labels[a];
            out[a].method = "spatial";
            out[a].mode = mode;
            out[a].temperature_k = out[a].stat_err_k = out[a].sys_lo_k = out[a].sys_hi_k = nan;
            out[a].flags.truncated = true;
        }
        return out;
    }

    const ImageFit fit = fit_ion_image(image, fit_opts);
    if (!fit.fit.converged) throw FitError("spatial_thermometry: image fit did not converge");

    // The thermal ellipse lies along the trap principal axes; decide which
    // fitted radius belongs to which axis from the recovered rotation.
    double rel = fit.params.rotation_deg - trap.axis_rotation_deg;
    while (rel > 90.0) rel -= 180.0;
    while (rel <= -90.0) rel += 180.0;
    const bool swapped = std::abs(rel) > 45.0;

    std::vector<ThermometryResult> out;
    out.push_back(spatial_result_from_radius(fit.params.radius_x_m, fit.one_sigma.radius_x_m,
                                             swapped ? trap.nu_y : trap.nu_x, ion, bounds,
                                             w_i_nominal_m, mode, swapped ? "y" : "x"));
    out.push_back(spatial_result_from_radius(fit.params.radius_y_m, fit.one_sigma.radius_y_m,
                                             swapped ? trap.nu_x : trap.nu_y, ion, bounds,
                                             w_i_nominal_m, mode, swapped ? "x" : "y"));
    if (out[0].axis == "y") std::swap(out[0], out[1]);
    return out;
}

double voigt_fwhm(double gamma_g_hz, double gamma_l_hz) {
    if (!(gamma_g_hz >= 0.0 && gamma_l_hz >= 0.0))
        throw DomainError("voigt_fwhm: widths must be >= 0");
    if (gamma_g_hz == 0.0 && gamma_l_hz == 0.0)
        throw DomainError("voigt_fwhm: widths cannot both be zero");
    return kOlLinear * gamma_l_hz +
           std::sqrt(kOlQuad * gamma_l_hz * gamma_l_hz + gamma_g_hz * gamma_g_hz);
}

VoigtDecomposition voigt_decompose(double gamma_t_hz, double gamma_l_hz) {
    if (!(gamma_t_hz > 0.0)) throw DomainError("voigt_decompose: total width must be > 0");
    if (!(gamma_l_hz >= 0.0)) throw DomainError("voigt_decompose: Lorentzian width must be >= 0");
    const double shifted = gamma_t_hz - kOlLinear * gamma_l_hz;
    const double radicand = shifted * shifted - kOlQuad * gamma_l_hz * gamma_l_hz;
    if (shifted <= 0.0 || radicand <= 0.0) return {0.0, true};
    return {std::sqrt(radicand), false};
}

double doppler_temperature(double gamma_g_hz, const IonSpecies& ion, Mode mode) {
    if (!(gamma_g_hz >= 0.0)) throw DomainError("doppler_temperature: width must be >= 0");
    const double gl = gamma_g_hz * ion.wavelength_m;
    // Physical: Gamma_G is the FWHM of the thermal Doppler profile. The
    // literal variant keeps the published m (Gamma lambda)^2 / 2 k_B form,
    // exactly 4 ln2 larger.
    const double coeff = mode == Mode::Physical ? 1.0 / kEightLn2 : 0.5;
    return ion.mass_kg * gl * gl * coeff / k_boltzmann;
}

ThermometryResult spectroscopic_thermometry(const SpectrumScan& scan, const IonSpecies& ion,
                                            double gamma_l_natural_hz, double gamma_l_min_observed_hz,
                                            Mode mode, const SpectrumFitOptions& fit_opts) {
    if (!(gamma_l_natural_hz > 0.0))
        throw DomainError("spectroscopic_thermometry: natural linewidth must be > 0");
    if (!(gamma_l_natural_hz <= gamma_l_min_observed_hz))
        throw DomainError(
            "spectroscopic_thermometry: natural linewidth must not exceed the smallest observed linewidth");

    const SpectrumFit fit = fit_spectrum(scan, fit_opts);
    if (!fit.fit.converged) throw FitError("spectroscopic_thermometry: spectrum fit did not converge");

    const double gamma_t = fit.params.fwhm_total_hz;
    const double dgamma_t = fit.one_sigma.fwhm_total_hz;

    ThermometryResult r;
    r.axis = "beam";
    r.method = "spectroscopic";
    r.mode = mode;

    // Upper bound: all non-thermal broadening at its minimum (natural
    // linewidth). Lower bound: Lorentzian part as wide as the smallest
    // linewidth ever observed.
    const auto hi = voigt_decompose(gamma_t, gamma_l_natural_hz);
    const auto lo = voigt_decompose(gamma_t, gamma_l_min_observed_hz);
    r.flags.clamped_hi = hi.clamped;
    r.flags.clamped_lo = lo.clamped;
    r.sys_hi_k = doppler_temperature(hi.gamma_g_hz, ion, mode);
    r.sys_lo_k = doppler_temperature(lo.gamma_g_hz, ion, mode);
    r.temperature_k = 0.5 * (r.sys_lo_k + r.sys_hi_k);
    r.flags.clamped = hi.clamped && lo.clamped;

    auto dT_dGammaT = [&](const VoigtDecomposition& d, double gamma_l, double temp) {
        if (d.clamped || d.gamma_g_hz <= 0.0) return 0.0;
        const double dg_dgt = (gamma_t - kOlLinear * gamma_l) / d.gamma_g_hz;
        return 2.0 * temp / d.gamma_g_hz * dg_dgt;
    };
    r.stat_err_k = 0.5 *
                   (dT_dGammaT(hi, gamma_l_natural_hz, r.sys_hi_k) +
                    dT_dGammaT(lo, gamma_l_min_observed_hz, r.sys_lo_k)) *
                   dgamma_t;
    r.flags.near_boundary = r.temperature_k < 2.0 * r.stat_err_k;
    return r;
}

std::string thermometry_csv_header() {
    return "method,axis,mode,T_K,stat_err_K,sys_lo_K,sys_hi_K,flags";
}

std::string thermometry_csv_row(const ThermometryResult& r) {
    std::string row = r.method + "," + r.axis + "," + to_string(r.mode) + ",";
    auto field = [](double v) { return std::isfinite(v) ? fmt_g(v) : std::string(); };
    row += field(r.temperature_k) + "," + field(r.stat_err_k) + "," + field(r.sys_lo_k) + "," +
           field(r.sys_hi_k) + "," + r.flags.to_csv_token();
    return row;
}

void write_thermometry_csv(const std::string& path, const std::vector<ThermometryResult>& rows) {
    auto out = open_output(path);
    out << thermometry_csv_header() << '\n';
    for (const auto& r : rows) out << thermometry_csv_row(r) << '\n';
}

} // namespace iontherm
