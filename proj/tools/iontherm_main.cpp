#include <CLI11.hpp>

#include <cmath>
#include <iostream>

#include "iontherm/experiments.hpp"
#include "iontherm/fitters.hpp"
#include "iontherm/imaging.hpp"
#include "iontherm/rng.hpp"
#include "iontherm/thermometry.hpp"

namespace {

using namespace iontherm;

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    std::string mode = "physical";
    int ensemble = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "configuration file (flat dotted keys)");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "master RNG seed");
    cmd->add_option("--mode", args.mode, "thermometry mode: physical|paper-literal");
    cmd->add_option("--ensemble", args.ensemble, "ensemble size override (>= 1)");
}

RunConfig load_config(const CommonArgs& args) {
    return args.config_path.empty() ? default_run_config() : load_run_config(args.config_path);
}

ExperimentSpec make_spec(ExperimentId id, const CommonArgs& args) {
    ExperimentSpec spec;
    spec.id = id;
    spec.config_path = args.config_path;
    spec.output_dir = args.out_dir;
    spec.seed = args.seed;
    spec.ensemble_override = args.ensemble;
    spec.mode = mode_from_string(args.mode);
    return spec;
}

int run_fit_image(const std::string& path, const CommonArgs& args, bool rotation_free) {
    const RunConfig cfg = load_config(args);
    const Mode mode = mode_from_string(args.mode);
    const IonImage image = read_pgm16(path);

    ImageFitOptions opts;
    opts.rotation_free = rotation_free;
    const ImageFit fit = fit_ion_image(image, opts);
    std::cout << serialize_fit(fit);

    const auto bounds = ResolutionBounds::from_imaging(cfg.scenario.imaging, cfg.scenario.ion.wavelength_m);
    const auto rows = spatial_thermometry(image, cfg.scenario.trap, cfg.scenario.ion, bounds,
                                          cfg.scenario.imaging.psf_radius_m, mode, opts);
    std::cout << thermometry_csv_header() << "\n";
    for (const auto& r : rows) std::cout << thermometry_csv_row(r) << "\n";
    return 0;
}

int run_fit_spectrum(const std::string& path, const CommonArgs& args, double gamma_l_min_mhz) {
    const RunConfig cfg = load_config(args);
    const Mode mode = mode_from_string(args.mode);
    const SpectrumScan scan = read_scan_csv(path);

    SpectrumFitOptions opts;
    opts.laser_linewidth_init_hz = cfg.scenario.laser.linewidth.hz;
    const SpectrumFit fit = fit_spectrum(scan, opts);
    std::cout << serialize_fit(fit);

    const double gamma_natural = cfg.scenario.ion.natural_linewidth.hz();
    // Without a calibration set, the smallest observed linewidth is this
    // scan's own fitted width.
    const double gamma_min = gamma_l_min_mhz > 0.0
                                 ? gamma_l_min_mhz * 1e6
                                 : std::max(fit.params.fwhm_total_hz, gamma_natural);
    const auto result =
        spectroscopic_thermometry(scan, cfg.scenario.ion, gamma_natural, gamma_min, mode, opts);
    std::cout << thermometry_csv_header() << "\n" << thermometry_csv_row(result) << "\n";
    return 0;
}

#define SELF_CHECK(cond, name)                                             \
    do {                                                                   \
        if (!(cond)) {                                                     \
            std::cerr << "selftest FAILED: " << name << "\n";              \
            return 1;                                                      \
        }                                                                  \
        std::cout << "selftest ok: " << name << "\n";                      \
    } while (0)

int run_selftest() {
    const IonSpecies ion = yb174();

    const double w_min = diffraction_limit(369.5e-9, 0.64);
    SELF_CHECK(std::abs(w_min - 248.2578125e-9) < 1e-15, "diffraction limit value");

    SELF_CHECK(variance_deconvolve(373e-9, 373e-9).clamped, "deconvolution clamps at equal radii");
    SELF_CHECK(std::abs(variance_deconvolve(373e-9, 249e-9).variance_m2 - 1.9282e-14) < 1e-18,
               "deconvolution anchor");

    {
        Rng rng(7);
        bool ok = true;
        for (int i = 0; i < 100 && ok; ++i) {
            const double x2 = 1e-16 + rng.uniform() * 1e-13;
            const OrdinaryFreq nu(3e5 + rng.uniform() * 1.2e6);
            const double ratio = temperature_from_variance(x2, nu, ion, Mode::PaperLiteral) /
                                 temperature_from_variance(x2, nu, ion, Mode::Physical);
            ok = std::abs(ratio - 0.25) < 1e-12;
            const double g = 1e6 + rng.uniform() * 4e7;
            const double dr = doppler_temperature(g, ion, Mode::PaperLiteral) /
                              doppler_temperature(g, ion, Mode::Physical);
            ok = ok && std::abs(dr - 2.77259) < 1e-5;
        }
        SELF_CHECK(ok, "mode-ratio identities");
    }

    {
        bool ok = true;
        for (int i = 0; i <= 20 && ok; ++i) {
            const double ratio = std::pow(10.0, -1.0 + 0.1 * i);
            const double gg = 10e6, gl = gg * ratio;
            const auto dec = voigt_decompose(voigt_fwhm(gg, gl), gl);
            ok = !dec.clamped && std::abs(dec.gamma_g_hz - gg) < 1e-10 * gg;
        }
        SELF_CHECK(ok, "Voigt round trip");
    }

    {
        Rng rng(11);
        bool ok = true;
        for (int trial = 0; trial < 5 && ok; ++trial) {
            Eigen::VectorXd p(7);
            p << 40 + rng.uniform() * 60, 14 + rng.uniform() * 4, 14 + rng.uniform() * 4,
                3 + rng.uniform() * 4, 3 + rng.uniform() * 4, rng.uniform() - 0.5,
                rng.uniform() * 10;
            Eigen::VectorXd val;
            Eigen::MatrixXd jac;
            gauss2d_model(p, 32, 32, val, &jac);
            for (int k = 0; k < 7 && ok; ++k) {
                const double h = std::max(1e-6 * std::abs(p[k]), 1e-8);
                Eigen::VectorXd pp = p, pm = p, vp, vm;
                pp[k] += h;
                pm[k] -= h;
                gauss2d_model(pp, 32, 32, vp, nullptr);
                gauss2d_model(pm, 32, 32, vm, nullptr);
                const double scale = jac.col(k).cwiseAbs().maxCoeff() + 1e-12;
                ok = ((vp - vm) / (2 * h) - jac.col(k)).cwiseAbs().maxCoeff() / scale < 1e-5;
            }
        }
        SELF_CHECK(ok, "Gaussian model Jacobian vs finite differences");
    }

    {
        const Scenario s = default_scenario();
        SimParams sim = s.sim;
        sim.duration_s = 2e-4;
        MotionState init;
        init.position = {1e-7, 0.0};
        const auto a = simulate_trajectory(init, s.trap, s.laser, s.noise, s.ion, sim, 42);
        const auto b = simulate_trajectory(init, s.trap, s.laser, s.noise, s.ion, sim, 42);
        bool ok = a.samples.size() == b.samples.size();
        for (size_t i = 0; i < a.samples.size() && ok; ++i)
            ok = a.samples[i].position.x == b.samples[i].position.x &&
                 a.samples[i].velocity.y == b.samples[i].velocity.y;
        SELF_CHECK(ok, "trajectory determinism");
    }

    try {
        parse_run_config("no.such.key = 1\n");
        std::cerr << "selftest FAILED: unknown config key accepted\n";
        return 1;
    } catch (const ConfigError&) {
        std::cout << "selftest ok: unknown config key rejected\n";
    }

    std::cout << "selftest: all checks passed\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trapped-ion thermometry simulator: spatial (imaging) and spectroscopic (Doppler) "
                 "temperature measurements over controlled heating, detuning, and trap-rotation studies"};
    app.require_subcommand(1);

    CommonArgs heating_args, sweep_args, rotation_args, fit_image_args, fit_spectrum_args;
    std::string image_path, scan_path;
    bool rotation_free_fit = false;
    double gamma_l_min_mhz = 0.0;

    auto* heating = app.add_subcommand("heating-levels", "steady state, image, and spatial "
                                                         "thermometry per noise level");
    add_common(heating, heating_args);
    auto* sweep = app.add_subcommand("detuning-sweep", "spatial + spectroscopic temperatures across "
                                                       "the detuning grid");
    add_common(sweep, sweep_args);
    auto* rotation = app.add_subcommand("axis-rotation", "anisotropic cooling across the trap "
                                                         "rotation grid");
    add_common(rotation, rotation_args);

    auto* fit_image = app.add_subcommand("fit-image", "fit a rendered PGM image and report "
                                                      "spatial thermometry");
    fit_image->add_option("pgm", image_path, "16-bit PGM with sidecar metadata")->required();
    fit_image->add_flag("--rotation-free", rotation_free_fit, "let the spot rotation float");
    add_common(fit_image, fit_image_args);

    auto* fit_spec = app.add_subcommand("fit-spectrum", "fit a fluorescence scan CSV and report "
                                                        "spectroscopic thermometry");
    fit_spec->add_option("csv", scan_path, "scan with columns detuning_mhz,rate_hz,dwell_s")->required();
    fit_spec->add_option("--gamma-l-min-mhz", gamma_l_min_mhz,
                         "smallest observed linewidth for the lower bound (default: this scan)");
    add_common(fit_spec, fit_spectrum_args);

    app.add_subcommand("selftest", "run the built-in invariant checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand("heating-levels")) {
            run_heating_levels(make_spec(ExperimentId::HeatingLevels, heating_args),
                               load_config(heating_args));
        } else if (app.got_subcommand("detuning-sweep")) {
            run_detuning_sweep(make_spec(ExperimentId::DetuningSweep, sweep_args),
                               load_config(sweep_args));
        } else if (app.got_subcommand("axis-rotation")) {
            run_axis_rotation(make_spec(ExperimentId::AxisRotation, rotation_args),
                              load_config(rotation_args));
        } else if (app.got_subcommand("fit-image")) {
            return run_fit_image(image_path, fit_image_args, rotation_free_fit);
        } else if (app.got_subcommand("fit-spectrum")) {
            return run_fit_spectrum(scan_path, fit_spectrum_args, gamma_l_min_mhz);
        } else if (app.got_subcommand("selftest")) {
            return run_selftest();
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
