#include "iontherm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "iontherm/fitters.hpp"
#include "iontherm/imaging.hpp"
#include "iontherm/io_util.hpp"
#include "iontherm/rng.hpp"

namespace iontherm {

namespace fs = std::filesystem;

namespace {

struct Context {
    Scenario scenario;
    ExperimentTunables exp;
    Mode mode;
    std::uint64_t seed;
    fs::path out;
    ResolutionBounds bounds;
};

Context make_context(const ExperimentSpec& spec, const RunConfig& cfg) {
    Context ctx;
    ctx.scenario = cfg.scenario;
    ctx.exp = cfg.experiment;
    ctx.mode = spec.mode;
    ctx.seed = spec.seed;
    if (spec.ensemble_override > 0) ctx.scenario.sim.ensemble = spec.ensemble_override;
    validate_scenario(ctx.scenario);

    ctx.out = spec.output_dir;
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) throw IoError("cannot create output directory '" + spec.output_dir + "'");

    ctx.bounds = ResolutionBounds::from_imaging(ctx.scenario.imaging, ctx.scenario.ion.wavelength_m);
    const double w_i = ctx.scenario.imaging.psf_radius_m;
    if (!(w_i >= ctx.bounds.w_lo_m && w_i <= ctx.bounds.w_hi_m))
        throw ConfigError("imaging.psf_radius: nominal resolution must lie inside [diffraction limit, "
                          "smallest observed spot]");
    return ctx;
}

/// Far-detuned points cool slowly; stretch the simulated window so the
/// averaging stays comfortably past equilibration, bounded to keep sweeps
/// affordable.
double adaptive_duration(const Context& ctx, const TrapConfig& trap, const LaserConfig& laser) {
    const auto damping = axis_damping_rates(trap, laser, ctx.scenario.ion);
    double slowest = std::numeric_limits<double>::infinity();
    for (double g : damping)
        if (g > 0.0) slowest = std::min(slowest, g);
    const double base = ctx.scenario.sim.duration_s;
    if (!std::isfinite(slowest)) return base;
    return std::clamp(30.0 / slowest, base, 12.0 * base);
}

/// Velocity-variance temperature seen along the beam: what a Doppler
/// measurement averages over.
double beam_temperature(const SteadyStateTemps& temps, const TrapConfig& trap,
                        const LaserConfig& laser) {
    const Vec2 beam = laser.direction.rotated(-deg_to_rad(trap.axis_rotation_deg));
    return beam.x * beam.x * temps.axis[0].kelvin + beam.y * beam.y * temps.axis[1].kelvin;
}

std::string flags_or_empty(const ThermometryResult& r) { return r.flags.to_csv_token(); }

std::string num_or_empty(double v) { return std::isfinite(v) ? fmt_g(v) : std::string(); }

std::vector<ThermometryResult> measure_image(const Context& ctx, const TrapConfig& trap,
                                             const IonImage& image, bool rotation_free,
                                             const SteadyStateTemps& sim) {
    ImageFitOptions opts;
    opts.rotation_free = rotation_free;
    auto rows = spatial_thermometry(image, trap, ctx.scenario.ion, ctx.bounds,
                                    ctx.scenario.imaging.psf_radius_m, ctx.mode, opts);
    for (auto& r : rows) {
        const int a = r.axis == "x" ? 0 : 1;
        r.flags.unconverged = !sim.axis[a].converged;
    }
    return rows;
}

ImageFit fit_for_radii(const IonImage& image, bool rotation_free) {
    ImageFitOptions opts;
    opts.rotation_free = rotation_free;
    return fit_ion_image(image, opts);
}

void maybe_dump_trajectory(const Context& ctx, const TrapConfig& trap, const LaserConfig& laser,
                           const NoiseDriveConfig& noise, const std::string& name,
                           std::uint64_t seed) {
    if (!ctx.exp.dump_trajectories) return;
    SimParams sim = ctx.scenario.sim;
    sim.duration_s = std::min(sim.duration_s, 5e-3);
    const auto record =
        simulate_trajectory(MotionState{}, trap, laser, noise, ctx.scenario.ion, sim, seed);
    write_trajectory_csv((ctx.out / name).string(), record);
}

} // namespace

HeatingLevelsResult run_heating_levels(const ExperimentSpec& spec, const RunConfig& cfg) {
    Context ctx = make_context(spec, cfg);
    const auto& levels = ctx.exp.heating_psd_levels;
    if (levels.size() < 2)
        throw ConfigError("heating-levels: need at least two noise PSD levels");

    // The study is anchored by a pair of levels at a 3.3x drive-voltage
    // ratio (10.89x in PSD).
    bool ratio_pair = false;
    for (size_t i = 0; i < levels.size() && !ratio_pair; ++i)
        for (size_t j = 0; j < levels.size() && !ratio_pair; ++j)
            if (levels[i] > 0.0 && std::abs(levels[j] / levels[i] - 10.89) < 0.02 * 10.89)
                ratio_pair = true;
    if (!ratio_pair)
        throw ConfigError("heating-levels: levels must include a 10.89x PSD pair (3.3x voltage)");

    HeatingLevelsResult result;
    std::ostringstream csv;
    csv << "level,noise_psd_n2_per_hz,method,axis,mode,T_K,stat_err_K,sys_lo_K,sys_hi_K,flags,"
           "w_obs_nm,w_err_nm,T_sim_K,T_sim_err_K,sim_converged\n";

    for (size_t lv = 0; lv < levels.size(); ++lv) {
        const std::uint64_t level_seed = derive_seed(ctx.seed, lv);
        NoiseDriveConfig noise = ctx.scenario.noise;
        noise.force_psd = levels[lv];

        EnsembleOptions eopts;
        eopts.collect_samples = true;
        const auto ens = steady_state_anisotropic(ctx.scenario.trap, ctx.scenario.laser, noise,
                                                  ctx.scenario.ion, ctx.scenario.sim, level_seed, eopts);

        const auto image = render_from_trajectory(ens.samples, ctx.scenario.trap.axis_rotation_deg,
                                                  ctx.scenario.imaging, ctx.exp.photons_per_image,
                                                  derive_seed(level_seed, 9001));

        HeatingLevelPoint point;
        point.level = static_cast<int>(lv);
        point.noise_psd = levels[lv];
        point.sim = ens.temps;
        point.image_truncated = image.truncated;
        point.image_path = (ctx.out / ("heating_level" + std::to_string(lv) + ".pgm")).string();
        write_pgm16(point.image_path, image);
        write_image_csv(point.image_path + ".csv", image);

        if (!image.truncated) {
            const auto fit = fit_for_radii(image, false);
            point.fitted_radius_m[0] = fit.params.radius_x_m;
            point.fitted_radius_m[1] = fit.params.radius_y_m;
            point.fitted_radius_err_m[0] = fit.one_sigma.radius_x_m;
            point.fitted_radius_err_m[1] = fit.one_sigma.radius_y_m;
        }
        point.spatial = measure_image(ctx, ctx.scenario.trap, image, false, ens.temps);

        for (size_t a = 0; a < point.spatial.size(); ++a) {
            const auto& r = point.spatial[a];
            const int axis = r.axis == "x" ? 0 : 1;
            csv << lv << ',' << fmt_g(levels[lv]) << ',' << r.method << ',' << r.axis << ','
                << to_string(r.mode) << ',' << num_or_empty(r.temperature_k) << ','
                << num_or_empty(r.stat_err_k) << ',' << num_or_empty(r.sys_lo_k) << ','
                << num_or_empty(r.sys_hi_k) << ',' << flags_or_empty(r) << ','
                << num_or_empty(point.fitted_radius_m[axis] * 1e9) << ','
                << num_or_empty(point.fitted_radius_err_m[axis] * 1e9) << ','
                << fmt_g(point.sim.axis[axis].kelvin) << ',' << fmt_g(point.sim.axis[axis].stat_err)
                << ',' << (point.sim.axis[axis].converged ? "true" : "false") << '\n';
        }

        maybe_dump_trajectory(ctx, ctx.scenario.trap, ctx.scenario.laser, noise,
                              "trajectory_level" + std::to_string(lv) + ".csv",
                              derive_seed(level_seed, 777));
        result.levels.push_back(std::move(point));
    }

    result.results_csv = (ctx.out / "heating_levels.csv").string();
    auto out = open_output(result.results_csv);
    out << csv.str();
    return result;
}

DetuningSweepResult run_detuning_sweep(const ExperimentSpec& spec, const RunConfig& cfg) {
    Context ctx = make_context(spec, cfg);
    const std::vector<double>& grid =
        spec.grid_override.empty() ? ctx.exp.detuning_grid_mhz : spec.grid_override;
    if (grid.size() < 3) throw ConfigError("detuning-sweep: need at least 3 grid points");
    if (!std::is_sorted(grid.begin(), grid.end(), [](double a, double b) { return a <= b; }))
        throw ConfigError("detuning-sweep: grid must be strictly increasing");
    if (grid.back() >= 0.0) throw ConfigError("detuning-sweep: grid must stay red of resonance");

    DetuningSweepResult result;
    std::ostringstream spatial_csv;
    spatial_csv << "level,noise_psd_n2_per_hz,delta_mhz,method,axis,mode,T_K,stat_err_K,sys_lo_K,"
                   "sys_hi_K,flags,T_sim_K,T_sim_err_K,sim_converged,T_beam_sim_K\n";

    std::vector<double> scan_grid_hz(ctx.exp.scan_points);
    for (int i = 0; i < ctx.exp.scan_points; ++i)
        scan_grid_hz[i] = 1e6 * (ctx.exp.scan_start_mhz +
                                 (ctx.exp.scan_stop_mhz - ctx.exp.scan_start_mhz) * i /
                                     (ctx.exp.scan_points - 1));

    for (size_t lv = 0; lv < ctx.exp.heating_psd_levels.size(); ++lv) {
        const std::uint64_t level_seed = derive_seed(ctx.seed, 100 + lv);
        NoiseDriveConfig noise = ctx.scenario.noise;
        noise.force_psd = ctx.exp.heating_psd_levels[lv];

        SweepLevel level;
        level.level = static_cast<int>(lv);
        level.noise_psd = noise.force_psd;
        level.t_beam_sim_min_k = std::numeric_limits<double>::infinity();

        for (size_t gi = 0; gi < grid.size(); ++gi) {
            LaserConfig laser = ctx.scenario.laser;
            laser.detuning = AngularFreq::from_mhz(grid[gi]);
            SimParams sim = ctx.scenario.sim;
            sim.duration_s = adaptive_duration(ctx, ctx.scenario.trap, laser);

            EnsembleOptions eopts;
            eopts.collect_samples = true;
            const auto ens = steady_state_anisotropic(ctx.scenario.trap, laser, noise,
                                                      ctx.scenario.ion, sim,
                                                      derive_seed(level_seed, gi), eopts);
            const auto image = render_from_trajectory(
                ens.samples, ctx.scenario.trap.axis_rotation_deg, ctx.scenario.imaging,
                ctx.exp.photons_per_image, derive_seed(level_seed, 5000 + gi));

            SweepPoint point;
            point.delta_mhz = grid[gi];
            point.sim = ens.temps;
            point.t_beam_sim_k = beam_temperature(ens.temps, ctx.scenario.trap, laser);
            point.image_truncated = image.truncated;
            point.spatial = measure_image(ctx, ctx.scenario.trap, image, false, ens.temps);
            if (ens.temps.axis[0].converged && ens.temps.axis[1].converged)
                level.t_beam_sim_min_k = std::min(level.t_beam_sim_min_k, point.t_beam_sim_k);

            for (const auto& r : point.spatial) {
                const int axis = r.axis == "x" ? 0 : 1;
                spatial_csv << lv << ',' << fmt_g(noise.force_psd) << ',' << fmt_g(grid[gi]) << ','
                            << r.method << ',' << r.axis << ',' << to_string(r.mode) << ','
                            << num_or_empty(r.temperature_k) << ',' << num_or_empty(r.stat_err_k)
                            << ',' << num_or_empty(r.sys_lo_k) << ',' << num_or_empty(r.sys_hi_k)
                            << ',' << flags_or_empty(r) << ',' << fmt_g(point.sim.axis[axis].kelvin)
                            << ',' << fmt_g(point.sim.axis[axis].stat_err) << ','
                            << (point.sim.axis[axis].converged ? "true" : "false") << ','
                            << fmt_g(point.t_beam_sim_k) << '\n';
            }
            level.points.push_back(std::move(point));
        }

        level.scan = dynamic_spectrum_scan(ctx.scenario.trap, ctx.scenario.laser, noise,
                                           ctx.scenario.ion, ctx.scenario.sim, scan_grid_hz,
                                           ctx.exp.scan_dwell_s, derive_seed(level_seed, 31337));
        write_scan_csv((ctx.out / ("scan_level" + std::to_string(lv) + ".csv")).string(), level.scan);

        SpectrumFitOptions fopts;
        fopts.laser_linewidth_init_hz = ctx.scenario.laser.linewidth.hz;
        const auto sfit = fit_spectrum(level.scan, fopts);
        level.gamma_t_hz = sfit.params.fwhm_total_hz;
        level.gamma_t_err_hz = sfit.one_sigma.fwhm_total_hz;
        result.levels.push_back(std::move(level));
    }

    // Lower-bound Lorentzian width: smallest linewidth observed anywhere in
    // this run (never below the natural linewidth).
    const double gamma_natural_hz = ctx.scenario.ion.natural_linewidth.hz();
    double gamma_min_hz = std::numeric_limits<double>::infinity();
    for (const auto& level : result.levels) gamma_min_hz = std::min(gamma_min_hz, level.gamma_t_hz);
    gamma_min_hz = std::max(gamma_min_hz, gamma_natural_hz);

    std::ostringstream spectro_csv;
    spectro_csv << "level,noise_psd_n2_per_hz,mode,gamma_t_mhz,gamma_t_err_mhz,T_K,stat_err_K,"
                   "sys_lo_K,sys_hi_K,flags,T_beam_sim_min_K\n";
    for (auto& level : result.levels) {
        SpectrumFitOptions fopts;
        fopts.laser_linewidth_init_hz = ctx.scenario.laser.linewidth.hz;
        level.spectroscopic = spectroscopic_thermometry(level.scan, ctx.scenario.ion,
                                                        gamma_natural_hz, gamma_min_hz, ctx.mode, fopts);
        const auto& r = level.spectroscopic;
        spectro_csv << level.level << ',' << fmt_g(level.noise_psd) << ',' << to_string(r.mode)
                    << ',' << fmt_g(level.gamma_t_hz * 1e-6) << ','
                    << fmt_g(level.gamma_t_err_hz * 1e-6) << ',' << num_or_empty(r.temperature_k)
                    << ',' << num_or_empty(r.stat_err_k) << ',' << num_or_empty(r.sys_lo_k) << ','
                    << num_or_empty(r.sys_hi_k) << ',' << flags_or_empty(r) << ','
                    << fmt_g(level.t_beam_sim_min_k) << '\n';
    }

    result.spatial_csv = (ctx.out / "detuning_sweep_spatial.csv").string();
    result.spectroscopic_csv = (ctx.out / "detuning_sweep_spectroscopic.csv").string();
    open_output(result.spatial_csv) << spatial_csv.str();
    open_output(result.spectroscopic_csv) << spectro_csv.str();
    return result;
}

AxisRotationResult run_axis_rotation(const ExperimentSpec& spec, const RunConfig& cfg) {
    Context ctx = make_context(spec, cfg);
    const std::vector<double>& grid =
        spec.grid_override.empty() ? ctx.exp.rotation_grid_deg : spec.grid_override;
    if (grid.size() < 3) throw ConfigError("axis-rotation: need at least 3 grid points");

    TrapConfig trap = ctx.scenario.trap;
    trap.nu_y = OrdinaryFreq(trap.nu_x.hz * ctx.exp.rotation_aspect_ratio);
    SimParams sim = ctx.scenario.sim;
    sim.duration_s = ctx.exp.rotation_duration_s;
    // The aspect-derived frequency may exceed what the configured step
    // supports; tighten dt to keep the integrator bound satisfied.
    sim.dt_s = std::min(sim.dt_s, 1.0 / (51.0 * std::max(trap.nu_x.hz, trap.nu_y.hz)));

    AxisRotationResult result;
    std::ostringstream csv;
    csv << "theta_deg,mode,T_weak_K,T_weak_err_K,weak_converged,T_strong_K,T_strong_err_K,"
           "strong_converged,weak_axis,T_spatial_weak_K,T_spatial_strong_K,flags\n";

    // Sample images across the sweep, always including the most anisotropic
    // angle.
    const size_t image_stride = std::max<size_t>(1, grid.size() / 4);

    for (size_t gi = 0; gi < grid.size(); ++gi) {
        trap.axis_rotation_deg = grid[gi];
        {
            auto bad = invariant_violations(Scenario{ctx.scenario.ion, trap, ctx.scenario.laser,
                                                     ctx.scenario.imaging, ctx.scenario.noise, sim});
            if (!bad.empty()) throw ValidationError(std::move(bad));
        }

        EnsembleOptions eopts;
        eopts.collect_samples = true;
        const auto ens = steady_state_anisotropic(trap, ctx.scenario.laser, ctx.scenario.noise,
                                                  ctx.scenario.ion, sim, derive_seed(ctx.seed, gi),
                                                  eopts);

        RotationPoint point;
        point.theta_deg = grid[gi];
        point.sim = ens.temps;

        // Weak axis = smaller cooling projection.
        const auto damping = axis_damping_rates(trap, ctx.scenario.laser, ctx.scenario.ion);
        point.weak_axis = damping[0] < damping[1] ? 0 : 1;

        const auto image = render_from_trajectory(ens.samples, trap.axis_rotation_deg,
                                                  ctx.scenario.imaging, ctx.exp.photons_per_image,
                                                  derive_seed(ctx.seed, 4000 + gi));
        point.image_truncated = image.truncated;
        if (gi % image_stride == 0 || std::abs(grid[gi] - 45.0) < 1e-9) {
            point.image_path = (ctx.out / ("rotation_theta" + fmt_g(grid[gi]) + ".pgm")).string();
            write_pgm16(point.image_path, image);
        }
        point.spatial = measure_image(ctx, trap, image, true, ens.temps);

        const int weak = point.weak_axis, strong = 1 - weak;
        const auto& spat_weak = point.spatial[weak];
        const auto& spat_strong = point.spatial[strong];
        std::string flags = spat_weak.flags.to_csv_token();
        if (!spat_strong.flags.to_csv_token().empty()) {
            if (!flags.empty()) flags += ';';
            flags += spat_strong.flags.to_csv_token();
        }
        csv << fmt_g(grid[gi]) << ',' << to_string(ctx.mode) << ','
            << fmt_g(point.sim.axis[weak].kelvin) << ',' << fmt_g(point.sim.axis[weak].stat_err)
            << ',' << (point.sim.axis[weak].converged ? "true" : "false") << ','
            << fmt_g(point.sim.axis[strong].kelvin) << ',' << fmt_g(point.sim.axis[strong].stat_err)
            << ',' << (point.sim.axis[strong].converged ? "true" : "false") << ','
            << (weak == 0 ? "x" : "y") << ',' << num_or_empty(spat_weak.temperature_k) << ','
            << num_or_empty(spat_strong.temperature_k) << ',' << flags << '\n';

        result.points.push_back(std::move(point));
    }

    result.results_csv = (ctx.out / "axis_rotation.csv").string();
    open_output(result.results_csv) << csv.str();
    return result;
}

void write_scan_csv(const std::string& path, const SpectrumScan& scan) {
    auto out = open_output(path);
    out << "detuning_mhz,rate_hz,dwell_s\n";
    for (const auto& p : scan.points)
        out << fmt_g(p.detuning_hz * 1e-6) << ',' << fmt_g(p.rate_hz) << ',' << fmt_g(p.dwell_s)
            << '\n';
}

SpectrumScan read_scan_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    SpectrumScan scan;
    std::string line;
    if (!std::getline(in, line)) throw IoError("'" + path + "': empty file");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string a, b, c;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ','))
            throw IoError("'" + path + "': expected detuning_mhz,rate_hz,dwell_s rows");
        try {
            scan.points.push_back({std::stod(a) * 1e6, std::stod(b), std::stod(c)});
        } catch (const std::exception&) {
            throw IoError("'" + path + "': cannot parse row '" + line + "'");
        }
    }
    return scan;
}

} // namespace iontherm
