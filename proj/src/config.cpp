#include "iontherm/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace iontherm {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "': cannot parse '" + v + "' as a number");
    }
}

int parse_int(const std::string& key, const std::string& v) {
    const double x = parse_double(key, v);
    if (x != std::floor(x)) throw ConfigError("config: key '" + key + "': expected an integer, got '" + v + "'");
    return static_cast<int>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("config: key '" + key + "': empty list element");
        out.push_back(parse_double(key, item));
    }
    if (out.empty()) throw ConfigError("config: key '" + key + "': empty list");
    return out;
}

std::string format_list(const std::vector<double>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) os << ",";
        os << v[i];
    }
    return os.str();
}

// Values that cannot be applied directly because they interact with other
// keys (magnification enters the object-plane pitch).
struct Staging {
    double physical_pixel_pitch_um = 13.0;
    bool pitch_set = false;
};

struct KeySpec {
    std::function<void(RunConfig&, Staging&, const std::string&, const std::string&)> apply;
    std::function<std::string(const RunConfig&, const Staging&)> show;
};

const std::map<std::string, KeySpec>& registry() {
    static const std::map<std::string, KeySpec> reg = [] {
        std::map<std::string, KeySpec> m;
        auto num = [&m](const std::string& key, std::function<void(RunConfig&, double)> set,
                        std::function<double(const RunConfig&)> get) {
            m[key] = KeySpec{
                [set](RunConfig& c, Staging&, const std::string& k, const std::string& v) { set(c, parse_double(k, v)); },
                [get](const RunConfig& c, const Staging&) {
                    std::ostringstream os;
                    os << get(c);
                    return os.str();
                }};
        };
        auto integer = [&m](const std::string& key, std::function<void(RunConfig&, int)> set,
                            std::function<int(const RunConfig&)> get) {
            m[key] = KeySpec{
                [set](RunConfig& c, Staging&, const std::string& k, const std::string& v) { set(c, parse_int(k, v)); },
                [get](const RunConfig& c, const Staging&) { return std::to_string(get(c)); }};
        };
        auto boolean = [&m](const std::string& key, std::function<void(RunConfig&, bool)> set,
                            std::function<bool(const RunConfig&)> get) {
            m[key] = KeySpec{
                [set](RunConfig& c, Staging&, const std::string& k, const std::string& v) { set(c, parse_bool(k, v)); },
                [get](const RunConfig& c, const Staging&) { return std::string(get(c) ? "true" : "false"); }};
        };
        auto list = [&m](const std::string& key, std::function<void(RunConfig&, std::vector<double>)> set,
                         std::function<std::vector<double>(const RunConfig&)> get) {
            m[key] = KeySpec{
                [set](RunConfig& c, Staging&, const std::string& k, const std::string& v) { set(c, parse_list(k, v)); },
                [get](const RunConfig& c, const Staging&) { return format_list(get(c)); }};
        };

        m["ion.label"] = KeySpec{
            [](RunConfig& c, Staging&, const std::string&, const std::string& v) { c.scenario.ion.label = v; },
            [](const RunConfig& c, const Staging&) { return c.scenario.ion.label; }};
        num("ion.mass_amu",
            [](RunConfig& c, double v) { c.scenario.ion.mass_kg = v * constants::atomic_mass_unit; },
            [](const RunConfig& c) { return c.scenario.ion.mass_amu(); });
        num("ion.wavelength_nm",
            [](RunConfig& c, double v) { c.scenario.ion.wavelength_m = v * 1e-9; },
            [](const RunConfig& c) { return c.scenario.ion.wavelength_m * 1e9; });
        num("ion.natural_linewidth_mhz",
            [](RunConfig& c, double v) { c.scenario.ion.natural_linewidth = AngularFreq::from_mhz(v); },
            [](const RunConfig& c) { return c.scenario.ion.natural_linewidth.mhz(); });

        num("trap.nu_x_hz", [](RunConfig& c, double v) { c.scenario.trap.nu_x = OrdinaryFreq(v); },
            [](const RunConfig& c) { return c.scenario.trap.nu_x.hz; });
        num("trap.nu_y_hz", [](RunConfig& c, double v) { c.scenario.trap.nu_y = OrdinaryFreq(v); },
            [](const RunConfig& c) { return c.scenario.trap.nu_y.hz; });
        num("trap.nu_z_hz", [](RunConfig& c, double v) { c.scenario.trap.nu_z = OrdinaryFreq(v); },
            [](const RunConfig& c) { return c.scenario.trap.nu_z.hz; });
        num("trap.axis_rotation_deg", [](RunConfig& c, double v) { c.scenario.trap.axis_rotation_deg = v; },
            [](const RunConfig& c) { return c.scenario.trap.axis_rotation_deg; });
        num("trap.rf_drive_hz", [](RunConfig& c, double v) { c.scenario.trap.rf_drive = OrdinaryFreq(v); },
            [](const RunConfig& c) { return c.scenario.trap.rf_drive.hz; });

        num("laser.detuning_mhz", [](RunConfig& c, double v) { c.scenario.laser.detuning = AngularFreq::from_mhz(v); },
            [](const RunConfig& c) { return c.scenario.laser.detuning.mhz(); });
        num("laser.saturation", [](RunConfig& c, double v) { c.scenario.laser.saturation = v; },
            [](const RunConfig& c) { return c.scenario.laser.saturation; });
        num("laser.linewidth_hz", [](RunConfig& c, double v) { c.scenario.laser.linewidth = OrdinaryFreq(v); },
            [](const RunConfig& c) { return c.scenario.laser.linewidth.hz; });
        num("laser.micromotion_broadening_mhz",
            [](RunConfig& c, double v) { c.scenario.laser.micromotion_broadening = AngularFreq::from_mhz(v); },
            [](const RunConfig& c) { return c.scenario.laser.micromotion_broadening.mhz(); });
        num("laser.direction_x", [](RunConfig& c, double v) { c.scenario.laser.direction.x = v; },
            [](const RunConfig& c) { return c.scenario.laser.direction.x; });
        num("laser.direction_y", [](RunConfig& c, double v) { c.scenario.laser.direction.y = v; },
            [](const RunConfig& c) { return c.scenario.laser.direction.y; });

        num("imaging.numerical_aperture", [](RunConfig& c, double v) { c.scenario.imaging.numerical_aperture = v; },
            [](const RunConfig& c) { return c.scenario.imaging.numerical_aperture; });
        num("imaging.magnification", [](RunConfig& c, double v) { c.scenario.imaging.magnification = v; },
            [](const RunConfig& c) { return c.scenario.imaging.magnification; });
        num("imaging.psf_radius_nm", [](RunConfig& c, double v) { c.scenario.imaging.psf_radius_m = v * 1e-9; },
            [](const RunConfig& c) { return c.scenario.imaging.psf_radius_m * 1e9; });
        m["imaging.physical_pixel_pitch_um"] = KeySpec{
            [](RunConfig&, Staging& st, const std::string& k, const std::string& v) {
                st.physical_pixel_pitch_um = parse_double(k, v);
                st.pitch_set = true;
            },
            [](const RunConfig&, const Staging& st) {
                std::ostringstream os;
                os << st.physical_pixel_pitch_um;
                return os.str();
            }};
        num("imaging.quantum_efficiency", [](RunConfig& c, double v) { c.scenario.imaging.quantum_efficiency = v; },
            [](const RunConfig& c) { return c.scenario.imaging.quantum_efficiency; });
        num("imaging.read_noise_counts", [](RunConfig& c, double v) { c.scenario.imaging.read_noise_counts = v; },
            [](const RunConfig& c) { return c.scenario.imaging.read_noise_counts; });
        num("imaging.baseline_offset_counts", [](RunConfig& c, double v) { c.scenario.imaging.baseline_offset_counts = v; },
            [](const RunConfig& c) { return c.scenario.imaging.baseline_offset_counts; });
        integer("imaging.grid_width", [](RunConfig& c, int v) { c.scenario.imaging.grid_width = v; },
                [](const RunConfig& c) { return c.scenario.imaging.grid_width; });
        integer("imaging.grid_height", [](RunConfig& c, int v) { c.scenario.imaging.grid_height = v; },
                [](const RunConfig& c) { return c.scenario.imaging.grid_height; });
        num("imaging.min_observed_spot_nm", [](RunConfig& c, double v) { c.scenario.imaging.min_observed_spot_m = v * 1e-9; },
            [](const RunConfig& c) { return c.scenario.imaging.min_observed_spot_m * 1e9; });

        num("noise.force_psd_n2_per_hz", [](RunConfig& c, double v) { c.scenario.noise.force_psd = v; },
            [](const RunConfig& c) { return c.scenario.noise.force_psd; });
        num("noise.coupling_x", [](RunConfig& c, double v) { c.scenario.noise.coupling.x = v; },
            [](const RunConfig& c) { return c.scenario.noise.coupling.x; });
        num("noise.coupling_y", [](RunConfig& c, double v) { c.scenario.noise.coupling.y = v; },
            [](const RunConfig& c) { return c.scenario.noise.coupling.y; });

        num("sim.dt_s", [](RunConfig& c, double v) { c.scenario.sim.dt_s = v; },
            [](const RunConfig& c) { return c.scenario.sim.dt_s; });
        num("sim.duration_s", [](RunConfig& c, double v) { c.scenario.sim.duration_s = v; },
            [](const RunConfig& c) { return c.scenario.sim.duration_s; });
        num("sim.transient_fraction", [](RunConfig& c, double v) { c.scenario.sim.transient_fraction = v; },
            [](const RunConfig& c) { return c.scenario.sim.transient_fraction; });
        num("sim.escape_radius_um", [](RunConfig& c, double v) { c.scenario.sim.escape_radius_m = v * 1e-6; },
            [](const RunConfig& c) { return c.scenario.sim.escape_radius_m * 1e6; });
        m["sim.recoil_model"] = KeySpec{
            [](RunConfig& c, Staging&, const std::string& k, const std::string& v) {
                if (v == "diffusion")
                    c.scenario.sim.recoil_model = RecoilModel::Diffusion;
                else if (v == "events")
                    c.scenario.sim.recoil_model = RecoilModel::Events;
                else
                    throw ConfigError("config: key '" + k + "': expected diffusion|events, got '" + v + "'");
            },
            [](const RunConfig& c, const Staging&) {
                return std::string(c.scenario.sim.recoil_model == RecoilModel::Diffusion ? "diffusion" : "events");
            }};
        num("sim.emission_second_moment", [](RunConfig& c, double v) { c.scenario.sim.emission_second_moment = v; },
            [](const RunConfig& c) { return c.scenario.sim.emission_second_moment; });
        integer("sim.sample_stride", [](RunConfig& c, int v) { c.scenario.sim.sample_stride = v; },
                [](const RunConfig& c) { return c.scenario.sim.sample_stride; });
        integer("sim.ensemble", [](RunConfig& c, int v) { c.scenario.sim.ensemble = v; },
                [](const RunConfig& c) { return c.scenario.sim.ensemble; });
        num("sim.equilibration_tolerance", [](RunConfig& c, double v) { c.scenario.sim.equilibration_tolerance = v; },
            [](const RunConfig& c) { return c.scenario.sim.equilibration_tolerance; });

        list("heating.psd_levels_n2_per_hz", [](RunConfig& c, std::vector<double> v) { c.experiment.heating_psd_levels = std::move(v); },
             [](const RunConfig& c) { return c.experiment.heating_psd_levels; });
        list("detuning.grid_mhz", [](RunConfig& c, std::vector<double> v) { c.experiment.detuning_grid_mhz = std::move(v); },
             [](const RunConfig& c) { return c.experiment.detuning_grid_mhz; });
        num("detuning.scan_start_mhz", [](RunConfig& c, double v) { c.experiment.scan_start_mhz = v; },
            [](const RunConfig& c) { return c.experiment.scan_start_mhz; });
        num("detuning.scan_stop_mhz", [](RunConfig& c, double v) { c.experiment.scan_stop_mhz = v; },
            [](const RunConfig& c) { return c.experiment.scan_stop_mhz; });
        integer("detuning.scan_points", [](RunConfig& c, int v) { c.experiment.scan_points = v; },
                [](const RunConfig& c) { return c.experiment.scan_points; });
        num("detuning.scan_dwell_s", [](RunConfig& c, double v) { c.experiment.scan_dwell_s = v; },
            [](const RunConfig& c) { return c.experiment.scan_dwell_s; });
        list("rotation.grid_deg", [](RunConfig& c, std::vector<double> v) { c.experiment.rotation_grid_deg = std::move(v); },
             [](const RunConfig& c) { return c.experiment.rotation_grid_deg; });
        num("rotation.aspect_ratio", [](RunConfig& c, double v) { c.experiment.rotation_aspect_ratio = v; },
            [](const RunConfig& c) { return c.experiment.rotation_aspect_ratio; });
        num("rotation.duration_s", [](RunConfig& c, double v) { c.experiment.rotation_duration_s = v; },
            [](const RunConfig& c) { return c.experiment.rotation_duration_s; });
        num("output.photons_per_image", [](RunConfig& c, double v) { c.experiment.photons_per_image = v; },
            [](const RunConfig& c) { return c.experiment.photons_per_image; });
        boolean("output.dump_trajectories", [](RunConfig& c, bool v) { c.experiment.dump_trajectories = v; },
                [](const RunConfig& c) { return c.experiment.dump_trajectories; });
        return m;
    }();
    return reg;
}

void finalize(RunConfig& cfg, const Staging& st) {
    cfg.scenario.imaging.pixel_pitch_m =
        st.physical_pixel_pitch_um * 1e-6 / cfg.scenario.imaging.magnification;
    // Direction-style inputs are normalized here; validation still rejects
    // an exactly-zero vector.
    if (cfg.scenario.laser.direction.norm() > 0.0)
        cfg.scenario.laser.direction = cfg.scenario.laser.direction.normalized();
    if (cfg.scenario.noise.coupling.norm() > 0.0)
        cfg.scenario.noise.coupling = cfg.scenario.noise.coupling.normalized();
}

void validate_all(const RunConfig& cfg) {
    auto v = invariant_violations(cfg.scenario);
    auto e = experiment_violations(cfg.experiment);
    v.insert(v.end(), e.begin(), e.end());
    if (!v.empty()) throw ValidationError(std::move(v));
}

} // namespace

std::vector<std::string> experiment_violations(const ExperimentTunables& e) {
    std::vector<std::string> v;
    auto monotone = [](const std::vector<double>& g) {
        return std::adjacent_find(g.begin(), g.end(), [](double a, double b) { return !(a < b); }) == g.end();
    };
    if (e.heating_psd_levels.size() < 2)
        v.push_back("heating.psd_levels: need at least two levels");
    for (double p : e.heating_psd_levels)
        if (!(p >= 0.0)) v.push_back("heating.psd_levels: levels must be >= 0");
    if (!monotone(e.detuning_grid_mhz))
        v.push_back("detuning.grid_mhz: grid must be strictly increasing");
    if (!e.detuning_grid_mhz.empty() && e.detuning_grid_mhz.back() >= 0.0)
        v.push_back("detuning.grid_mhz: sweep grid must stay red of resonance (all < 0)");
    if (!(e.scan_stop_mhz > e.scan_start_mhz))
        v.push_back("detuning.scan: stop must exceed start");
    if (e.scan_points < 8) v.push_back("detuning.scan_points: need at least 8");
    if (!(e.scan_dwell_s > 0.0)) v.push_back("detuning.scan_dwell_s: must be > 0");
    if (!monotone(e.rotation_grid_deg))
        v.push_back("rotation.grid_deg: grid must be strictly increasing");
    if (!(e.rotation_aspect_ratio > 0.0)) v.push_back("rotation.aspect_ratio: must be > 0");
    if (!(e.rotation_duration_s > 0.0)) v.push_back("rotation.duration_s: must be > 0");
    if (!(e.photons_per_image > 0.0)) v.push_back("output.photons_per_image: must be > 0");
    return v;
}

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.scenario = default_scenario();
    finalize(cfg, Staging{});
    validate_all(cfg);
    return cfg;
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    cfg.scenario = default_scenario();
    Staging st;
    std::vector<std::string> problems;

    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            problems.push_back("line " + std::to_string(lineno) + ": expected 'key = value'");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = registry().find(key);
        if (it == registry().end()) {
            problems.push_back("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
            continue;
        }
        try {
            it->second.apply(cfg, st, key, value);
        } catch (const ConfigError& err) {
            problems.push_back(err.what());
        }
    }
    if (!problems.empty()) {
        std::string msg = "config errors:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }
    finalize(cfg, st);
    validate_all(cfg);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string config_reference() {
    RunConfig cfg = default_run_config();
    Staging st;
    std::ostringstream os;
    for (const auto& [key, spec] : registry())
        os << key << " = " << spec.show(cfg, st) << "\n";
    return os.str();
}

} // namespace iontherm
