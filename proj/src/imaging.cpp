#include "iontherm/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "iontherm/io_util.hpp"
#include "iontherm/rng.hpp"

namespace iontherm {

double expected_spot_radius(double sigma_m, double psf_radius_m) {
    return std::sqrt(4.0 * sigma_m * sigma_m + psf_radius_m * psf_radius_m);
}

namespace {

// 4-point Gauss-Legendre on [-1, 1].
constexpr double kGlNode[4] = {-0.8611363115940526, -0.33998104358485626,
                               0.33998104358485626, 0.8611363115940526};
constexpr double kGlWeight[4] = {0.34785484513745385, 0.6521451548625461,
                                 0.6521451548625461, 0.34785484513745385};

void apply_camera_noise(IonImage& img, const ImagingConfig& imaging, Rng& rng) {
    for (auto& c : img.counts) {
        double v = static_cast<double>(rng.poisson(c));
        if (imaging.read_noise_counts > 0.0) v += imaging.read_noise_counts * rng.normal();
        c = std::max(0.0, std::round(v));
    }
}

} // namespace

IonImage render_image(double sigma_x_m, double sigma_y_m, double spot_rotation_deg,
                      const ImagingConfig& imaging, double n_photons_expected, std::uint64_t seed,
                      bool apply_noise) {
    if (sigma_x_m < 0.0 || sigma_y_m < 0.0)
        throw DomainError("render_image: sigma must be >= 0");
    if (!(n_photons_expected > 0.0))
        throw DomainError("render_image: expected photon count must be > 0");

    IonImage img;
    img.width = imaging.grid_width;
    img.height = imaging.grid_height;
    img.pixel_pitch_m = imaging.pixel_pitch_m;
    img.counts.assign(static_cast<size_t>(img.width) * img.height, 0.0);
    img.expected_photons = n_photons_expected;
    img.seed = seed;
    img.noise_applied = apply_noise;

    // Spot-frame standard deviations through the PSF.
    const double su = 0.5 * expected_spot_radius(sigma_x_m, imaging.psf_radius_m);
    const double sv = 0.5 * expected_spot_radius(sigma_y_m, imaging.psf_radius_m);
    const double phi = deg_to_rad(spot_rotation_deg);
    const double cphi = std::cos(phi), sphi = std::sin(phi);
    const double norm = 1.0 / (constants::two_pi * su * sv);
    const double half_pitch = 0.5 * img.pixel_pitch_m;
    const double flux = n_photons_expected * imaging.quantum_efficiency;

    double captured = 0.0;
    for (int iy = 0; iy < img.height; ++iy) {
        const double yc = img.pixel_center_y(iy);
        for (int ix = 0; ix < img.width; ++ix) {
            const double xc = img.pixel_center_x(ix);
            double acc = 0.0;
            for (int a = 0; a < 4; ++a) {
                const double x = xc + half_pitch * kGlNode[a];
                for (int b = 0; b < 4; ++b) {
                    const double y = yc + half_pitch * kGlNode[b];
                    const double u = cphi * x + sphi * y;
                    const double v = -sphi * x + cphi * y;
                    acc += kGlWeight[a] * kGlWeight[b] *
                           std::exp(-0.5 * (u * u / (su * su) + v * v / (sv * sv)));
                }
            }
            const double integral = acc * norm * half_pitch * half_pitch;
            captured += integral;
            img.at(ix, iy) = flux * integral + imaging.baseline_offset_counts;
        }
    }
    img.truncated = captured < 0.999;

    if (apply_noise) {
        Rng rng(seed);
        apply_camera_noise(img, imaging, rng);
    }
    return img;
}

IonImage render_from_trajectory(const std::vector<TrajectorySample>& samples, double rotation_deg,
                                const ImagingConfig& imaging, double n_photons_expected,
                                std::uint64_t seed, bool apply_noise) {
    if (samples.size() < 1000)
        throw InsufficientDataError("render_from_trajectory: need >= 1000 trajectory samples, got " +
                                    std::to_string(samples.size()));
    if (!(n_photons_expected > 0.0))
        throw DomainError("render_from_trajectory: expected photon count must be > 0");

    IonImage img;
    img.width = imaging.grid_width;
    img.height = imaging.grid_height;
    img.pixel_pitch_m = imaging.pixel_pitch_m;
    img.counts.assign(static_cast<size_t>(img.width) * img.height, 0.0);
    img.expected_photons = n_photons_expected;
    img.seed = seed;
    img.noise_applied = apply_noise;

    // Emission probability follows the instantaneous scattering rate; a
    // rate-free trajectory (laser off) falls back to uniform weights.
    std::vector<double> cdf(samples.size());
    double total = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
        total += std::max(0.0, samples[i].scatter_rate);
        cdf[i] = total;
    }
    const bool uniform = total <= 0.0;

    Rng rng(seed);
    const long n_photons = rng.poisson(n_photons_expected * imaging.quantum_efficiency);
    const double sigma_psf = 0.5 * imaging.psf_radius_m;
    const double rot = deg_to_rad(rotation_deg);
    long on_chip = 0;

    for (long p = 0; p < n_photons; ++p) {
        size_t idx;
        if (uniform) {
            idx = std::min(samples.size() - 1,
                           static_cast<size_t>(rng.uniform() * samples.size()));
        } else {
            const double target = rng.uniform() * total;
            idx = std::lower_bound(cdf.begin(), cdf.end(), target) - cdf.begin();
            if (idx >= samples.size()) idx = samples.size() - 1;
        }
        const Vec2 lab = samples[idx].position.rotated(rot);
        const double x = lab.x + sigma_psf * rng.normal();
        const double y = lab.y + sigma_psf * rng.normal();
        const int ix = static_cast<int>(std::floor(x / img.pixel_pitch_m + 0.5 * img.width));
        const int iy = static_cast<int>(std::floor(y / img.pixel_pitch_m + 0.5 * img.height));
        if (ix >= 0 && ix < img.width && iy >= 0 && iy < img.height) {
            img.at(ix, iy) += 1.0;
            ++on_chip;
        }
    }
    img.truncated = n_photons > 0 && static_cast<double>(on_chip) / n_photons < 0.999;

    for (auto& c : img.counts) c += imaging.baseline_offset_counts;
    if (apply_noise && imaging.read_noise_counts > 0.0) {
        for (auto& c : img.counts)
            c = std::max(0.0, std::round(c + imaging.read_noise_counts * rng.normal()));
    }
    return img;
}

void write_pgm16(const std::string& path, const IonImage& image) {
    auto out = open_output(path);
    out << "P5\n" << image.width << " " << image.height << "\n65535\n";
    for (int iy = 0; iy < image.height; ++iy) {
        for (int ix = 0; ix < image.width; ++ix) {
            const double v = std::clamp(std::round(image.at(ix, iy)), 0.0, 65535.0);
            const auto w = static_cast<std::uint16_t>(v);
            const unsigned char bytes[2] = {static_cast<unsigned char>(w >> 8),
                                            static_cast<unsigned char>(w & 0xff)};
            out.write(reinterpret_cast<const char*>(bytes), 2);
        }
    }

    auto meta = open_output(path + ".txt");
    meta << "pixel_pitch_object_m = " << fmt_g(image.pixel_pitch_m) << "\n"
         << "width = " << image.width << "\n"
         << "height = " << image.height << "\n"
         << "expected_photons = " << fmt_g(image.expected_photons) << "\n"
         << "seed = " << image.seed << "\n"
         << "truncated = " << (image.truncated ? "true" : "false") << "\n"
         << "noise_applied = " << (image.noise_applied ? "true" : "false") << "\n"
         << "row0_y_m = " << fmt_g((0.5 - 0.5 * image.height) * image.pixel_pitch_m) << "\n";
}

IonImage read_pgm16(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string magic;
    in >> magic;
    if (magic != "P5") throw IoError("'" + path + "': not a binary PGM (P5)");
    int width = 0, height = 0, maxval = 0;
    in >> width >> height >> maxval;
    if (width <= 0 || height <= 0) throw IoError("'" + path + "': bad dimensions");
    if (maxval != 65535) throw IoError("'" + path + "': expected maxval 65535");
    in.get();  // single whitespace after maxval

    IonImage img;
    img.width = width;
    img.height = height;
    img.counts.assign(static_cast<size_t>(width) * height, 0.0);
    for (auto& c : img.counts) {
        unsigned char bytes[2];
        in.read(reinterpret_cast<char*>(bytes), 2);
        if (!in) throw IoError("'" + path + "': truncated pixel data");
        c = static_cast<double>((static_cast<unsigned>(bytes[0]) << 8) | bytes[1]);
    }

    std::ifstream meta(path + ".txt");
    if (!meta) throw IoError("cannot open sidecar '" + path + ".txt'");
    std::string line;
    while (std::getline(meta, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "pixel_pitch_object_m") img.pixel_pitch_m = std::stod(value);
        else if (key == "expected_photons") img.expected_photons = std::stod(value);
        else if (key == "seed") img.seed = std::stoull(value);
        else if (key == "truncated") img.truncated = (value == "true");
        else if (key == "noise_applied") img.noise_applied = (value == "true");
    }
    if (!(img.pixel_pitch_m > 0.0))
        throw IoError("sidecar '" + path + ".txt': missing pixel_pitch_object_m");
    return img;
}

void write_image_csv(const std::string& path, const IonImage& image) {
    auto out = open_output(path);
    for (int iy = 0; iy < image.height; ++iy) {
        for (int ix = 0; ix < image.width; ++ix) {
            if (ix) out << ',';
            out << fmt_g(image.at(ix, iy));
        }
        out << '\n';
    }
}

} // namespace iontherm
